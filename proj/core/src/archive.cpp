#include "sra/archive.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace sra {

namespace {

constexpr std::string_view kMagic = "SRATNSR1";

template <typename T>
void append_le(std::string& out, T value) {
    static_assert(sizeof(T) == 8);
    std::uint64_t bits;
    std::memcpy(&bits, &value, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(const char* p) {
    static_assert(sizeof(T) == 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
}

}  // namespace

void TensorArchive::put(std::string name, Tensor tensor) {
    if (contains(name)) throw ArchiveError("duplicate tensor name", name);
    entries_.push_back(Entry{std::move(name), std::move(tensor)});
}

void TensorArchive::put(std::string name, IntTensor tensor) {
    if (contains(name)) throw ArchiveError("duplicate tensor name", name);
    if (shape_numel(tensor.shape) != static_cast<std::int64_t>(tensor.data.size()))
        throw ArchiveError("integer tensor size does not match shape", name);
    entries_.push_back(Entry{std::move(name), std::move(tensor)});
}

bool TensorArchive::contains(std::string_view name) const {
    for (const auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

const TensorArchive::Entry& TensorArchive::find(std::string_view name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw ArchiveError("tensor not found in archive", std::string(name));
}

const Tensor& TensorArchive::tensor(std::string_view name) const {
    const auto& e = find(name);
    if (const auto* t = std::get_if<Tensor>(&e.payload)) return *t;
    throw ArchiveError("tensor is not f64", e.name);
}

const IntTensor& TensorArchive::int_tensor(std::string_view name) const {
    const auto& e = find(name);
    if (const auto* t = std::get_if<IntTensor>(&e.payload)) return *t;
    throw ArchiveError("tensor is not i64", e.name);
}

std::vector<std::string> TensorArchive::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

std::string TensorArchive::serialize() const {
    nlohmann::json manifest = nlohmann::json::array();
    std::string payload;
    for (const auto& e : entries_) {
        const std::uint64_t offset = payload.size();
        nlohmann::json rec;
        rec["name"] = e.name;
        if (const auto* t = std::get_if<Tensor>(&e.payload)) {
            rec["dtype"] = "f64";
            rec["shape"] = t->shape();
            for (double v : t->values()) append_le(payload, v);
        } else {
            const auto& it = std::get<IntTensor>(e.payload);
            rec["dtype"] = "i64";
            rec["shape"] = it.shape;
            for (std::int64_t v : it.data) append_le(payload, v);
        }
        rec["offset"] = offset;
        rec["nbytes"] = payload.size() - offset;
        manifest.push_back(std::move(rec));
    }
    nlohmann::json header;
    header["metadata"] = metadata_;
    header["tensors"] = std::move(manifest);
    const std::string text = header.dump();

    std::string out;
    out.reserve(kMagic.size() + 8 + text.size() + payload.size());
    out.append(kMagic);
    append_le(out, static_cast<std::uint64_t>(text.size()));
    out.append(text);
    out.append(payload);
    return out;
}

TensorArchive TensorArchive::deserialize(std::string_view bytes) {
    if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic)
        throw ArchiveError("not a tensor archive (bad magic)");
    const auto header_len = read_le<std::uint64_t>(bytes.data() + kMagic.size());
    const std::size_t header_start = kMagic.size() + 8;
    if (header_len > bytes.size() - header_start) throw ArchiveError("manifest truncated");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(header_start, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw ArchiveError(std::string("corrupt manifest: ") + e.what());
    }
    if (!header.is_object() || !header.contains("tensors") || !header["tensors"].is_array())
        throw ArchiveError("corrupt manifest: missing tensor list");

    TensorArchive archive;
    archive.metadata_ = header.value("metadata", nlohmann::json::object());
    const std::string_view payload = bytes.substr(header_start + header_len);
    std::uint64_t expected_offset = 0;
    for (const auto& rec : header["tensors"]) {
        std::string name = rec.value("name", std::string{});
        try {
            const auto dtype = rec.at("dtype").get<std::string>();
            const auto shape = rec.at("shape").get<Shape>();
            const auto offset = rec.at("offset").get<std::uint64_t>();
            const auto nbytes = rec.at("nbytes").get<std::uint64_t>();
            const auto count = static_cast<std::uint64_t>(shape_numel(shape));
            if (nbytes != count * 8) throw ArchiveError("payload length does not match shape", name);
            if (offset != expected_offset) throw ArchiveError("payload offset out of order", name);
            if (offset + nbytes > payload.size()) throw ArchiveError("payload missing or truncated", name);
            const char* p = payload.data() + offset;
            if (dtype == "f64") {
                std::vector<double> data(count);
                for (std::uint64_t i = 0; i < count; ++i) data[i] = read_le<double>(p + 8 * i);
                archive.put(name, Tensor(shape, std::move(data)));
            } else if (dtype == "i64") {
                IntTensor it{shape, std::vector<std::int64_t>(count)};
                for (std::uint64_t i = 0; i < count; ++i) it.data[i] = read_le<std::int64_t>(p + 8 * i);
                archive.put(name, std::move(it));
            } else {
                throw ArchiveError("unknown dtype '" + dtype + "'", name);
            }
            expected_offset = offset + nbytes;
        } catch (const nlohmann::json::exception& e) {
            throw ArchiveError(std::string("corrupt manifest entry: ") + e.what(), name);
        }
    }
    if (expected_offset != payload.size()) throw ArchiveError("trailing bytes after last payload");
    return archive;
}

void TensorArchive::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::string bytes = serialize();
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ArchiveError("cannot open " + tmp + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ArchiveError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArchiveError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

}  // namespace sra
