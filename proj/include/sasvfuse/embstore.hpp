#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sasvfuse/detail/binary_io.hpp"
#include "sasvfuse/detail/file_io.hpp"
#include "sasvfuse/error.hpp"

namespace sasvfuse {

/// EMB1 container, little-endian:
///   "EMB1" | u32 record_count | u32 dim | u16 name_len, name
///   then per record: u16 id_len, id, dim x f32.
inline constexpr std::string_view kEmbMagic = "EMB1";

class StoreError : public LoadError {
public:
    enum class Kind { BadMagic, Truncated, DimMismatch, NonFinite, DuplicateId, BadId, BadHeader };

    StoreError(Kind kind, std::optional<std::size_t> record, const std::string& what)
        : LoadError("embstore", what), kind_(kind), record_(record) {}

    Kind kind() const noexcept { return kind_; }
    std::optional<std::size_t> record() const noexcept { return record_; }

private:
    Kind kind_;
    std::optional<std::size_t> record_;
};

struct Embedding {
    std::string id;
    std::vector<float> values;

    std::size_t dim() const { return values.size(); }
    friend bool operator==(const Embedding&, const Embedding&) = default;
};

class EmbeddingStore {
public:
    EmbeddingStore(std::string source_name, std::uint32_t dim) : name_(std::move(source_name)), dim_(dim) {
        if (dim == 0) throw StoreError(StoreError::Kind::BadHeader, std::nullopt, "store dim must be positive");
    }

    const std::string& source_name() const { return name_; }
    std::uint32_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<Embedding>& entries() const { return entries_; }
    bool contains(std::string_view id) const { return index_.contains(std::string(id)); }

    void insert(std::string id, std::vector<float> values) {
        const std::size_t rec = entries_.size();
        if (id.empty()) throw StoreError(StoreError::Kind::BadId, rec, "record " + std::to_string(rec) + ": empty id");
        if (values.size() != dim_) {
            throw StoreError(StoreError::Kind::DimMismatch, rec,
                             "record " + std::to_string(rec) + ": dim mismatch (expected " + std::to_string(dim_) +
                                 ", got " + std::to_string(values.size()) + ")");
        }
        for (std::size_t j = 0; j < values.size(); ++j) {
            if (!std::isfinite(values[j])) {
                throw StoreError(StoreError::Kind::NonFinite, rec,
                                 "record " + std::to_string(rec) + ": non-finite value at position " +
                                     std::to_string(j));
            }
        }
        if (index_.contains(id)) {
            throw StoreError(StoreError::Kind::DuplicateId, rec,
                             "record " + std::to_string(rec) + ": duplicate id '" + id + "'");
        }
        index_.emplace(id, rec);
        entries_.push_back(Embedding{std::move(id), std::move(values)});
    }

    std::span<const float> get(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end()) {
            throw LookupError("embstore", "id '" + std::string(id) + "' not found in store '" + name_ + "'");
        }
        return entries_[it->second].values;
    }

    /// Logical equality: same name, dim, and id→vector map (record order ignored).
    /// Float comparison is on bit patterns.
    friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
        if (a.name_ != b.name_ || a.dim_ != b.dim_ || a.size() != b.size()) return false;
        for (const auto& e : a.entries_) {
            auto it = b.index_.find(e.id);
            if (it == b.index_.end()) return false;
            const auto& other = b.entries_[it->second].values;
            for (std::size_t j = 0; j < e.values.size(); ++j) {
                if (std::bit_cast<std::uint32_t>(e.values[j]) != std::bit_cast<std::uint32_t>(other[j])) return false;
            }
        }
        return true;
    }

private:
    std::string name_;
    std::uint32_t dim_;
    std::vector<Embedding> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline std::vector<std::uint8_t> write_store(const EmbeddingStore& store) {
    detail::ByteWriter w;
    w.bytes(kEmbMagic);
    w.u32(static_cast<std::uint32_t>(store.size()));
    w.u32(store.dim());
    w.str16(store.source_name());
    for (const auto& e : store.entries()) {
        w.str16(e.id);
        for (float v : e.values) w.f32(v);
    }
    return std::move(w).buffer();
}

inline EmbeddingStore read_store(std::span<const std::uint8_t> blob) {
    using Kind = StoreError::Kind;
    if (blob.size() < 4 || std::string_view(reinterpret_cast<const char*>(blob.data()), 4) != kEmbMagic) {
        throw StoreError(Kind::BadMagic, std::nullopt, "bad magic (expected \"EMB1\")");
    }
    detail::ByteReader r(blob.subspan(4), "embstore");
    std::uint32_t count = 0;
    std::uint32_t dim = 0;
    std::string name;
    try {
        count = r.u32("header");
        dim = r.u32("header");
        name = r.str16("header");
    } catch (const LoadError& e) {
        throw StoreError(Kind::Truncated, std::nullopt, e.what());
    }
    if (dim == 0) throw StoreError(Kind::BadHeader, std::nullopt, "header: declared dim is 0");

    EmbeddingStore store(std::move(name), dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string ctx = "record " + std::to_string(i);
        std::string id;
        std::vector<float> values(dim);
        try {
            id = r.str16(ctx);
            for (auto& v : values) v = r.f32(ctx);
        } catch (const LoadError& e) {
            throw StoreError(Kind::Truncated, i, e.what());
        }
        store.insert(std::move(id), std::move(values));
    }
    if (!r.at_end()) {
        // The format carries no per-record length, so surplus values in a
        // record surface as bytes left over after the declared records.
        const std::size_t last = count == 0 ? 0 : count - 1;
        throw StoreError(Kind::DimMismatch, last,
                         "record " + std::to_string(last) + ": dim mismatch (" + std::to_string(r.remaining()) +
                             " bytes beyond declared dim " + std::to_string(dim) + ")");
    }
    return store;
}

inline EmbeddingStore load_store(const std::filesystem::path& path) {
    auto bytes = detail::read_binary_file(path, "embstore");
    try {
        return read_store(bytes);
    } catch (const StoreError& e) {
        throw StoreError(e.kind(), e.record(), path.string() + ": " + e.what());
    }
}

inline void save_store(const std::filesystem::path& path, const EmbeddingStore& store) {
    detail::write_file(path, write_store(store), "embstore");
}

}  // namespace sasvfuse
