#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdb/dataset.hpp"

namespace cdb {

namespace detail {

inline std::uint32_t read_u32_be(std::ifstream& in, const std::string& path, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("truncated file reading " + std::string(what) + ": " + path);
    }
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// IDX image/label pair (the MNIST distribution format): big-endian headers,
// u8 pixels scaled to [0,1] by /255. num_classes is max label + 1.
inline LabeledDataset read_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream images(images_path, std::ios::binary);
    if (!images) throw std::runtime_error("cannot open: " + images_path);
    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) throw std::runtime_error("cannot open: " + labels_path);

    const std::uint32_t images_magic = detail::read_u32_be(images, images_path, "magic");
    if (images_magic != kIdxImagesMagic) {
        throw std::runtime_error("bad magic in " + images_path + ": expected 0x00000803");
    }
    const std::uint32_t labels_magic = detail::read_u32_be(labels, labels_path, "magic");
    if (labels_magic != kIdxLabelsMagic) {
        throw std::runtime_error("bad magic in " + labels_path + ": expected 0x00000801");
    }
    const std::uint32_t image_count = detail::read_u32_be(images, images_path, "count");
    const std::uint32_t rows = detail::read_u32_be(images, images_path, "rows");
    const std::uint32_t cols = detail::read_u32_be(images, images_path, "cols");
    const std::uint32_t label_count = detail::read_u32_be(labels, labels_path, "count");
    if (image_count != label_count) {
        throw std::runtime_error("count mismatch: " + std::to_string(image_count) + " images vs " +
                                 std::to_string(label_count) + " labels");
    }

    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    LabeledDataset ds;
    ds.features = Matrix(image_count, dim);
    ds.labels.resize(image_count);

    std::vector<unsigned char> pixel_row(dim);
    for (std::size_t i = 0; i < image_count; ++i) {
        if (!images.read(reinterpret_cast<char*>(pixel_row.data()), static_cast<std::streamsize>(dim))) {
            throw std::runtime_error("truncated file reading pixels: " + images_path);
        }
        auto feat = ds.features.row(i);
        for (std::size_t d = 0; d < dim; ++d) feat[d] = static_cast<double>(pixel_row[d]) / 255.0;
    }
    std::vector<unsigned char> raw_labels(label_count);
    if (!labels.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(label_count))) {
        throw std::runtime_error("truncated file reading labels: " + labels_path);
    }
    unsigned char max_label = 0;
    for (std::size_t i = 0; i < label_count; ++i) {
        ds.labels[i] = raw_labels[i];
        max_label = std::max(max_label, raw_labels[i]);
    }
    ds.num_classes = static_cast<std::size_t>(max_label) + 1;
    ds.recount();
    return ds;
}

}  // namespace cdb
