#pragma once

#include "sage/image.hpp"
#include "sage/nn.hpp"

namespace sage {

// Images travel through the nets as flattened column vectors (row-major scan).
template <class T>
nn::Vec<T> image_to_column(const ImageGrid& img) {
    nn::Vec<T> v(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i) v[static_cast<Eigen::Index>(i)] = static_cast<T>(img.pixels[i]);
    return v;
}

template <class T>
ImageGrid column_to_image(const Eigen::Ref<const nn::Vec<T>>& col, int h, int w) {
    ImageGrid img(h, w);
    for (size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<double>(col[static_cast<Eigen::Index>(i)]);
    return img;
}

template <class T>
nn::Mat<T> images_to_columns(const std::vector<ImageGrid>& imgs) {
    if (imgs.empty()) return {};
    nn::Mat<T> m(imgs[0].pixels.size(), imgs.size());
    for (size_t j = 0; j < imgs.size(); ++j) {
        if (imgs[j].pixels.size() != imgs[0].pixels.size())
            throw std::invalid_argument("images_to_columns: inconsistent image sizes");
        for (size_t i = 0; i < imgs[j].pixels.size(); ++i)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                static_cast<T>(imgs[j].pixels[i]);
    }
    return m;
}

}  // namespace sage
