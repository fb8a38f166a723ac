#pragma once

// Synthetic labelled images: parametric shapes on a dark background.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sra/tensor.hpp"

namespace sra {

inline constexpr int kMaxShapeClasses = 8;

struct ShapesDataset {
    Tensor images;            // [num, 1, size, size], values in [-1, 1]
    std::vector<int> labels;  // in [0, num_classes)
    int num_classes = 0;
    std::uint64_t seed = 0;

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
    /// Copies the listed samples into a new batch [indices.size(), C, H, W].
    Tensor gather(std::span<const std::int64_t> indices) const;
    std::vector<int> gather_labels(std::span<const std::int64_t> indices) const;
    /// Contiguous slice [begin, end).
    ShapesDataset slice(std::int64_t begin, std::int64_t end) const;
};

/// Classes, in order: disk, square, cross, horizontal stripes, ring,
/// triangle, diagonal stripes, vertical bars. Position, size and intensity
/// are jittered per image; label i is i % num_classes.
ShapesDataset generate_shapes(std::int64_t num, int num_classes, std::uint64_t seed, int image_size = 16);

void save_dataset(const ShapesDataset& data, const std::filesystem::path& path);
/// Throws ArchiveError for malformed or inconsistent files.
ShapesDataset load_dataset(const std::filesystem::path& path);

}  // namespace sra
