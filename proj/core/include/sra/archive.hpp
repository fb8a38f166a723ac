#pragma once

// Named-tensor archive: the single on-disk format for checkpoints,
// datasets, samples and PCA artifacts.
//
//   bytes 0..7    magic "SRATNSR1"
//   bytes 8..15   header length H, unsigned 64-bit little-endian
//   next H bytes  UTF-8 JSON manifest:
//                   {"metadata": {...},
//                    "tensors": [{"name", "dtype" ("f64"|"i64"), "shape",
//                                 "offset", "nbytes"}, ...]}
//   remainder     raw little-endian payloads, concatenated in manifest order
//
// Serialisation is deterministic, so save -> load -> save is byte-identical.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sra/tensor.hpp"

namespace sra {

struct IntTensor {
    Shape shape;
    std::vector<std::int64_t> data;
};

class ArchiveError : public std::runtime_error {
public:
    ArchiveError(const std::string& message, std::string tensor_name = {})
        : std::runtime_error(tensor_name.empty() ? message : message + " (tensor '" + tensor_name + "')"),
          tensor_name_(std::move(tensor_name)) {}
    const std::string& tensor_name() const { return tensor_name_; }

private:
    std::string tensor_name_;
};

class TensorArchive {
public:
    void put(std::string name, Tensor tensor);
    void put(std::string name, IntTensor tensor);

    bool contains(std::string_view name) const;
    const Tensor& tensor(std::string_view name) const;
    const IntTensor& int_tensor(std::string_view name) const;
    std::vector<std::string> names() const;
    std::size_t size() const { return entries_.size(); }

    nlohmann::json& metadata() { return metadata_; }
    const nlohmann::json& metadata() const { return metadata_; }

    std::string serialize() const;
    static TensorArchive deserialize(std::string_view bytes);

    void save(const std::filesystem::path& path) const;
    static TensorArchive load(const std::filesystem::path& path);

private:
    struct Entry {
        std::string name;
        std::variant<Tensor, IntTensor> payload;
    };
    const Entry& find(std::string_view name) const;

    std::vector<Entry> entries_;
    nlohmann::json metadata_ = nlohmann::json::object();
};

}  // namespace sra
