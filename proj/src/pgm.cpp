#include "sage/pgm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace sage {

namespace {

int read_pnm_token(std::istream& in) {
    // skips whitespace and '#' comments
    while (true) {
        int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    int value = 0;
    if (!(in >> value)) throw std::runtime_error("PGM: malformed header");
    return value;
}

}  // namespace

void save_pgm(const ImageGrid& img, const std::filesystem::path& path) {
    img.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("PGM: cannot open for writing: " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c)
            row[c] = static_cast<unsigned char>(std::lround(img.at(r, c) * 255.0));
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw std::runtime_error("PGM: write failed: " + path.string());
}

RawRaster load_pgm_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("PGM: cannot open: " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P5") throw std::runtime_error("PGM: expected P5 magic in " + path.string());
    RawRaster raw;
    raw.width = read_pnm_token(in);
    raw.height = read_pnm_token(in);
    int maxval = read_pnm_token(in);
    in.get();  // single whitespace before payload
    if (raw.width <= 0 || raw.height <= 0)
        throw std::runtime_error("PGM: bad dimensions in " + path.string());
    if (maxval != 255 && maxval != 65535)
        throw std::runtime_error("PGM: unsupported maxval " + std::to_string(maxval));
    raw.bit_depth = maxval == 255 ? 8 : 16;
    const size_t n = static_cast<size_t>(raw.width) * raw.height;
    raw.samples.resize(n);
    if (raw.bit_depth == 8) {
        std::vector<unsigned char> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in.gcount()) != n)
            throw std::runtime_error("PGM: truncated payload in " + path.string());
        for (size_t i = 0; i < n; ++i) raw.samples[i] = buf[i];
    } else {
        std::vector<unsigned char> buf(n * 2);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 2));
        if (static_cast<size_t>(in.gcount()) != n * 2)
            throw std::runtime_error("PGM: truncated payload in " + path.string());
        for (size_t i = 0; i < n; ++i)  // big-endian per the PNM spec
            raw.samples[i] = static_cast<uint16_t>(buf[2 * i] << 8 | buf[2 * i + 1]);
    }
    return raw;
}

ImageGrid load_pgm(const std::filesystem::path& path) { return normalize(load_pgm_raw(path)); }

void save_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path) {
    mask.validate();
    ImageGrid img = mask.to_image();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("PGM: cannot open for writing: " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) row[c] = mask.at(r, c) ? 255 : 0;
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
}

BinaryMask load_mask_pgm(const std::filesystem::path& path) {
    ImageGrid img = load_pgm(path);
    return binarize(img, 0.5);
}

}  // namespace sage
