#include <doctest.h>

#include <fstream>

#include "sage/image.hpp"
#include "sage/imgproc.hpp"
#include "sage/manifest.hpp"
#include "sage/pgm.hpp"
#include "sage/rng.hpp"
#include "test_util.hpp"

using namespace sage;

TEST_CASE("rng: same seed and stream replay the same sequence") {
    RngHandle a(42, "train"), b(42, "train");
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RngHandle c(42, "train"), d(42, "other");
    int differing = 0;
    for (int i = 0; i < 100; ++i) differing += c.next_u64() != d.next_u64();
    CHECK(differing > 90);
}

TEST_CASE("rng: forks are independent of draw position") {
    RngHandle a(7, "root");
    RngHandle f1 = a.fork("sub");
    a.next_u64();
    a.next_u64();
    RngHandle f2 = a.fork("sub");
    for (int i = 0; i < 10; ++i) CHECK(f1.next_u64() == f2.next_u64());
}

TEST_CASE("rng: distributions stay in range") {
    RngHandle rng(1, "dist");
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const int64_t k = rng.uniform_int(7);
        CHECK(k >= 0);
        CHECK(k < 7);
    }
    double mean = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) mean += rng.normal();
    mean /= n;
    CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("binarize: trivial and oracle cases") {
    ImageGrid zeros(8, 8, 0.0), ones(8, 8, 1.0);
    CHECK(binarize(zeros, 0.5).foreground_count() == 0);
    CHECK(binarize(ones, 0.5).foreground_count() == 64);

    // checkerboard of {0.2, 0.8}: exactly the 0.8 cells survive
    ImageGrid board(8, 8);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) board.at(r, c) = (r + c) % 2 == 0 ? 0.8 : 0.2;
    BinaryMask mask = binarize(board, 0.5);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) CHECK(mask.at(r, c) == ((r + c) % 2 == 0 ? 1 : 0));

    CHECK_THROWS(binarize(board, 0.0));
    CHECK_THROWS(binarize(board, 1.0));
    CHECK_THROWS(binarize(board, -1.0));
}

TEST_CASE("normalize: bit depths") {
    RawRaster raw;
    raw.height = 1;
    raw.width = 3;
    raw.bit_depth = 8;
    raw.samples = {255, 0, 128};
    ImageGrid img = normalize(raw);
    CHECK(img.pixels[0] == 1.0);
    CHECK(img.pixels[1] == 0.0);
    CHECK(img.pixels[2] == doctest::Approx(128.0 / 255.0));

    raw.bit_depth = 16;
    raw.samples = {32768, 65535, 0};
    img = normalize(raw);
    CHECK(img.pixels[0] == doctest::Approx(32768.0 / 65535.0));
    CHECK(img.pixels[1] == 1.0);

    raw.bit_depth = 12;
    CHECK_THROWS(normalize(raw));
}

TEST_CASE("pgm: 8-bit round trip within quantization bound") {
    test::TempDir tmp("pgm");
    RngHandle rng(3, "pgm");
    ImageGrid img = test::random_image(16, 24, rng);
    save_pgm(img, tmp.path() / "x.pgm");
    ImageGrid back = load_pgm(tmp.path() / "x.pgm");
    REQUIRE(back.height == 16);
    REQUIRE(back.width == 24);
    for (size_t i = 0; i < img.pixels.size(); ++i)
        CHECK(std::abs(img.pixels[i] - back.pixels[i]) <= 1.0 / 255.0 + 1e-12);
}

TEST_CASE("pgm: binarize is idempotent through a {0,255} raster") {
    test::TempDir tmp("pgm2");
    RngHandle rng(4, "mask");
    ImageGrid img = test::random_image(12, 12, rng);
    BinaryMask mask = binarize(img, 0.5);
    save_mask_pgm(mask, tmp.path() / "m.pgm");
    BinaryMask again = binarize(load_pgm(tmp.path() / "m.pgm"), 0.5);
    CHECK(again.pixels == mask.pixels);
}

TEST_CASE("pgm: 16-bit load") {
    test::TempDir tmp("pgm16");
    std::ofstream out(tmp.path() / "x.pgm", std::ios::binary);
    out << "P5\n2 1\n65535\n";
    unsigned char payload[4] = {0x80, 0x00, 0xFF, 0xFF};  // big-endian 32768, 65535
    out.write(reinterpret_cast<const char*>(payload), 4);
    out.close();
    RawRaster raw = load_pgm_raw(tmp.path() / "x.pgm");
    CHECK(raw.bit_depth == 16);
    CHECK(raw.samples[0] == 32768);
    CHECK(raw.samples[1] == 65535);
}

TEST_CASE("manifest: round trip and validation errors") {
    test::TempDir tmp("manifest");
    ImageGrid img(8, 8, 0.5);
    save_pgm(img, tmp.path() / "a.pgm");
    save_pgm(img, tmp.path() / "b.pgm");

    DatasetManifest m;
    m.root = tmp.path();
    m.entries.push_back({"p1", ClassLabel::control, Role::tumor_crop, "a.pgm",
                         CropGeometry{0.5, 0.5, 0.2, 0.2}});
    m.entries.push_back({"p2", ClassLabel::mutated, Role::whole_slice, "b.pgm", std::nullopt});
    save_manifest(m, tmp.path() / "manifest.jsonl");

    DatasetManifest loaded = load_manifest(tmp.path() / "manifest.jsonl");
    REQUIRE(loaded.entries.size() == 2);
    CHECK(loaded.entries[0].patient_id == "p1");
    CHECK(loaded.entries[0].crop.has_value());
    CHECK(loaded.entries[0].crop->center_row == doctest::Approx(0.5));
    CHECK(loaded.entries[1].role == Role::whole_slice);

    // out-of-range crop coordinate
    {
        std::ofstream out(tmp.path() / "bad.jsonl");
        out << R"({"patient_id":"p","class_label":"control","role":"tumor_crop","image_path":"a.pgm","crop_geometry":{"center_row":1.3,"center_col":0.5,"crop_h":0.2,"crop_w":0.2}})"
            << "\n";
    }
    CHECK_THROWS_WITH_AS(static_cast<void>(load_manifest(tmp.path() / "bad.jsonl")),
                         doctest::Contains("outside [0,1]"), std::runtime_error);

    // duplicate path
    {
        std::ofstream out(tmp.path() / "dup.jsonl");
        out << R"({"patient_id":"p","class_label":"control","role":"tumor_crop","image_path":"a.pgm"})" << "\n";
        out << R"({"patient_id":"q","class_label":"control","role":"shape_mask","image_path":"a.pgm"})" << "\n";
    }
    CHECK_THROWS_WITH_AS(static_cast<void>(load_manifest(tmp.path() / "dup.jsonl")),
                         doctest::Contains("duplicate"), std::runtime_error);

    // missing file
    {
        std::ofstream out(tmp.path() / "missing.jsonl");
        out << R"({"patient_id":"p","class_label":"control","role":"tumor_crop","image_path":"nope.pgm"})" << "\n";
    }
    CHECK_THROWS_WITH_AS(static_cast<void>(load_manifest(tmp.path() / "missing.jsonl")),
                         doctest::Contains("missing image file"), std::runtime_error);

    // parse failure
    {
        std::ofstream out(tmp.path() / "garbage.jsonl");
        out << "not json\n";
    }
    CHECK_THROWS_WITH_AS(static_cast<void>(load_manifest(tmp.path() / "garbage.jsonl")),
                         doctest::Contains("parse failure"), std::runtime_error);
}

TEST_CASE("imgproc: principal angle of analytic ellipses") {
    BinaryMask flat = test::ellipse_mask(64, 64, 8, 20, 0.0);
    CHECK(std::abs(principal_angle_deg(flat)) < 1.0);

    BinaryMask tilted = test::ellipse_mask(64, 64, 8, 20, 30.0);
    CHECK(principal_angle_deg(tilted) == doctest::Approx(30.0).epsilon(0.05));

    BinaryMask neg = test::ellipse_mask(64, 64, 8, 20, -40.0);
    CHECK(principal_angle_deg(neg) == doctest::Approx(-40.0).epsilon(0.05));
}

TEST_CASE("imgproc: rotate_expand keeps mass and matches the angle convention") {
    BinaryMask m = test::ellipse_mask(48, 48, 6, 16, 0.0);
    ImageGrid rot = rotate_expand(m.to_image(), 25.0);
    BinaryMask rm = binarize(rot, 0.5);
    CHECK(principal_angle_deg(rm) == doctest::Approx(25.0).epsilon(0.08));
    CHECK(rm.foreground_count() == doctest::Approx(m.foreground_count()).epsilon(0.05));
}

TEST_CASE("imgproc: otsu separates bimodal images") {
    ImageGrid img(32, 32, 0.1);
    for (int r = 10; r < 22; ++r)
        for (int c = 10; c < 22; ++c) img.at(r, c) = 0.8;
    const double t = otsu_threshold(img);
    CHECK(t > 0.1);
    CHECK(t < 0.8);
}

TEST_CASE("imgproc: connected components") {
    BinaryMask m(16, 16);
    m.at(2, 2) = 1;
    m.at(2, 3) = 1;
    m.at(9, 9) = 1;
    CHECK(connected_components(m) == 2);
    m.at(9, 9) = 0;
    CHECK(connected_components(m) == 1);
}
