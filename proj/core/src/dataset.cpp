#include "sra/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sra/archive.hpp"
#include "sra/rng.hpp"

namespace sra {
namespace {

struct Jitter {
    double cx, cy;       // centre in pixels
    double radius;       // half extent
    double intensity;    // foreground level in [0.6, 1]
    double phase;        // stripe offset
};

// Coverage of pixel (x, y) in [0, 1] for class c.
double coverage(int c, double x, double y, const Jitter& j) {
    const double dx = x - j.cx, dy = y - j.cy;
    const double r = std::hypot(dx, dy);
    const double R = j.radius;
    switch (c) {
        case 0: return r <= R ? 1.0 : 0.0;
        case 1: return std::abs(dx) <= R && std::abs(dy) <= R ? 1.0 : 0.0;
        case 2: {
            const double arm = std::max(1.0, 0.35 * R);
            const bool inside = std::abs(dx) <= R && std::abs(dy) <= R;
            return inside && (std::abs(dx) <= arm || std::abs(dy) <= arm) ? 1.0 : 0.0;
        }
        case 3: return std::fmod(y + j.phase, 4.0) < 2.0 ? 1.0 : 0.0;
        case 4: return r <= R && r >= 0.55 * R ? 1.0 : 0.0;
        case 5: return dy <= R && dy >= -R && std::abs(dx) <= (dy + R) / 2.0 ? 1.0 : 0.0;
        case 6: return std::fmod(x + y + j.phase + 32.0, 6.0) < 3.0 ? 1.0 : 0.0;
        case 7: return std::fmod(x + j.phase, 5.0) < 1.5 ? 1.0 : 0.0;
        default: throw std::logic_error("unknown shape class");
    }
}

}  // namespace

Tensor ShapesDataset::gather(std::span<const std::int64_t> indices) const {
    Shape shape = images.shape();
    const std::int64_t per = shape_numel(shape) / std::max<std::int64_t>(1, shape[0]);
    shape[0] = static_cast<std::int64_t>(indices.size());
    Tensor out(shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::int64_t src = indices[i];
        if (src < 0 || src >= size()) throw std::out_of_range("dataset index out of range");
        std::copy_n(images.data() + src * per, per, out.data() + static_cast<std::int64_t>(i) * per);
    }
    return out;
}

std::vector<int> ShapesDataset::gather_labels(std::span<const std::int64_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels.at(static_cast<std::size_t>(i)));
    return out;
}

ShapesDataset ShapesDataset::slice(std::int64_t begin, std::int64_t end) const {
    if (begin < 0 || end < begin || end > size()) throw std::out_of_range("dataset slice out of range");
    std::vector<std::int64_t> idx;
    for (auto i = begin; i < end; ++i) idx.push_back(i);
    return {gather(idx), gather_labels(idx), num_classes, seed};
}

ShapesDataset generate_shapes(std::int64_t num, int num_classes, std::uint64_t seed, int image_size) {
    if (num_classes < 2 || num_classes > kMaxShapeClasses)
        throw std::invalid_argument("generate_shapes: num_classes must be in [2, 8]");
    if (num < num_classes) throw std::invalid_argument("generate_shapes: need at least one sample per class");
    if (image_size < 8) throw std::invalid_argument("generate_shapes: image_size must be at least 8");

    ShapesDataset out;
    out.num_classes = num_classes;
    out.seed = seed;
    out.images = Tensor({num, 1, image_size, image_size});
    out.labels.resize(static_cast<std::size_t>(num));
    const double s = image_size;
    const std::int64_t per = static_cast<std::int64_t>(image_size) * image_size;
    for (std::int64_t i = 0; i < num; ++i) {
        Rng rng(seed, streams::dataset, static_cast<std::uint64_t>(i));
        const int c = static_cast<int>(i % num_classes);
        out.labels[static_cast<std::size_t>(i)] = c;
        Jitter j;
        // Small jitter keeps the classes separable on raw pixels.
        j.radius = s * (0.27 + 0.04 * rng.uniform());
        const double centre = 0.5 * (s - 1.0);
        j.cx = centre + s * 0.04 * (2.0 * rng.uniform() - 1.0);
        j.cy = centre + s * 0.04 * (2.0 * rng.uniform() - 1.0);
        j.intensity = 0.6 + 0.4 * rng.uniform();
        j.phase = 0.5 * rng.uniform();
        double* px = out.images.data() + i * per;
        for (int y = 0; y < image_size; ++y)
            for (int x = 0; x < image_size; ++x) {
                const double cov = coverage(c, x, y, j);
                const double v = -1.0 + cov * (j.intensity + 1.0) + 0.05 * rng.normal();
                px[y * image_size + x] = std::clamp(v, -1.0, 1.0);
            }
    }
    return out;
}

void save_dataset(const ShapesDataset& data, const std::filesystem::path& path) {
    if (data.images.rank() != 4 || data.images.dim(0) != data.size())
        throw std::invalid_argument("save_dataset: images and labels disagree");
    TensorArchive ar;
    ar.metadata() = {{"kind", "shapes_dataset"}, {"num_classes", data.num_classes}, {"seed", data.seed}};
    ar.put("images", data.images);
    IntTensor labels{{data.size()}, {data.labels.begin(), data.labels.end()}};
    ar.put("labels", std::move(labels));
    ar.save(path);
}

ShapesDataset load_dataset(const std::filesystem::path& path) {
    const auto ar = TensorArchive::load(path);
    const auto& meta = ar.metadata();
    if (meta.value("kind", "") != "shapes_dataset") throw ArchiveError("not a dataset archive: " + path.string());
    if (!ar.contains("images")) throw ArchiveError("dataset archive is missing a tensor", "images");
    if (!ar.contains("labels")) throw ArchiveError("dataset archive is missing a tensor", "labels");
    ShapesDataset out;
    out.images = ar.tensor("images");
    const auto& labels = ar.int_tensor("labels");
    out.num_classes = meta.at("num_classes").get<int>();
    out.seed = meta.value("seed", std::uint64_t{0});
    if (out.images.rank() != 4 || labels.shape.size() != 1 || labels.shape[0] != out.images.dim(0))
        throw ArchiveError("dataset images and labels disagree", "labels");
    for (auto l : labels.data) {
        if (l < 0 || l >= out.num_classes) throw ArchiveError("label out of range", "labels");
        out.labels.push_back(static_cast<int>(l));
    }
    return out;
}

}  // namespace sra
