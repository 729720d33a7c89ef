#include <filesystem>

#include <catch2/catch_amalgamated.hpp>

#include "cdb/idx.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;

namespace {

struct Fixture {
    std::string images;
    std::string labels;
};

Fixture fixture_dir() {
    const fs::path dir = fs::temp_directory_path() / "cdb_idx_test";
    fs::create_directories(dir);
    return {(dir / "images.idx3").string(), (dir / "labels.idx1").string()};
}

}  // namespace

TEST_CASE("hand-built two-image fixture round trips exactly") {
    const auto paths = fixture_dir();
    const std::vector<std::vector<std::uint8_t>> images = {
        {0, 255, 128, 1, 2, 3},
        {10, 20, 30, 40, 50, 60},
    };
    const std::vector<std::uint8_t> labels = {1, 0};
    testutil::write_idx_files(paths.images, paths.labels, images, labels, 2, 3);

    const auto ds = cdb::read_idx(paths.images, paths.labels);
    REQUIRE(ds.size() == 2);
    REQUIRE(ds.dim() == 6);
    REQUIRE(ds.num_classes == 2);
    REQUIRE(ds.labels == std::vector<std::size_t>{1, 0});
    REQUIRE(ds.class_counts == std::vector<std::size_t>{1, 1});
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t d = 0; d < 6; ++d) {
            REQUIRE(ds.features(i, d) == static_cast<double>(images[i][d]) / 255.0);
        }
    }
    REQUIRE(ds.features(0, 0) == 0.0);
    REQUIRE(ds.features(0, 1) == 1.0);
}

TEST_CASE("label magic in the image slot is a bad magic error") {
    const auto paths = fixture_dir();
    // write a labels-format file where images are expected
    testutil::write_idx_files(paths.images + ".swap", paths.images, {{1, 2, 3, 4, 5, 6}}, {0}, 2, 3);
    REQUIRE_THROWS_WITH(cdb::read_idx(paths.images, paths.images),
                        Catch::Matchers::ContainsSubstring("bad magic"));
}

TEST_CASE("count mismatch is reported") {
    const auto paths = fixture_dir();
    testutil::write_idx_files(paths.images, paths.labels, {{1, 2, 3, 4, 5, 6}}, {0, 1, 1}, 2, 3);
    REQUIRE_THROWS_WITH(cdb::read_idx(paths.images, paths.labels),
                        Catch::Matchers::ContainsSubstring("count mismatch"));
}

TEST_CASE("truncated pixel payload is reported") {
    const auto paths = fixture_dir();
    testutil::write_idx_files(paths.images, paths.labels, {{1, 2, 3, 4, 5, 6}, {7, 8, 9, 10, 11, 12}},
                              {0, 1}, 2, 3);
    const std::string bytes = testutil::read_file_bytes(paths.images);
    {
        std::ofstream out(paths.images, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 4));
    }
    REQUIRE_THROWS_WITH(cdb::read_idx(paths.images, paths.labels),
                        Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("missing files are reported") {
    const auto paths = fixture_dir();
    REQUIRE_THROWS_WITH(cdb::read_idx((fs::temp_directory_path() / "nope.idx3").string(), paths.labels),
                        Catch::Matchers::ContainsSubstring("cannot open"));
}
