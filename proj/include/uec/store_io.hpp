#pragma once
// UECS binary embedding store, version 1 (all integers little-endian):
//
//   "UECS" | u32 version=1 | u32 dim | u64 count | u32 name_len | name
//   count x ( u32 id_len | id | dim x f32 mean | dim x f32 var )
//   [ u32 crc32 of every preceding byte ]
//
// The trailing CRC is always written; readers accept files without it so
// that minimal writers only need the fields above.

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "uec/error.hpp"
#include "uec/gaussian.hpp"

namespace uec {

inline constexpr char kStoreMagic[4] = {'U', 'E', 'C', 'S'};
inline constexpr std::uint32_t kStoreVersion = 1;

using Bytes = std::vector<std::uint8_t>;

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, std::numeric_limits<uInt>::max()));
        crc = ::crc32(crc, data, chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

inline bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    const auto* p = reinterpret_cast<const unsigned char*>(s.data());
    while (i < s.size()) {
        const unsigned char c = p[i];
        std::size_t extra;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            extra = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + extra >= s.size()) return false;
        for (std::size_t t = 1; t <= extra; ++t) {
            if ((p[i + t] & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (p[i + t] & 0x3F);
        }
        if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
            cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
            return false;
        i += extra + 1;
    }
    return true;
}

namespace detail {

class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.insert(out_.end(), s.begin(), s.end());
    }
    void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
    Bytes& bytes() noexcept { return out_; }

private:
    Bytes out_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return size_ - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) throw TruncatedError(pos_, what);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    std::string str(const char* what) {
        const std::uint32_t n = u32(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

inline float to_f32_checked(double v, const std::string& where) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(v) || !std::isfinite(f))
        throw SerializationRefusedError("refusing to serialize non-finite value in " + where);
    return f;
}

}  // namespace detail

inline Bytes encode_store(const EmbeddingStore& store) {
    detail::ByteWriter w;
    w.raw(kStoreMagic, 4);
    w.u32(kStoreVersion);
    if (store.dim() > std::numeric_limits<std::uint32_t>::max()) throw SerializationRefusedError("dimension too large");
    w.u32(static_cast<std::uint32_t>(store.dim()));
    w.u64(store.size());
    w.str(store.model_name());
    for (const auto& rec : store.records()) {
        w.str(rec.id);
        for (double m : rec.embedding.mean()) w.f32(detail::to_f32_checked(m, "mean of '" + rec.id + "'"));
        for (double v : rec.embedding.var()) w.f32(detail::to_f32_checked(v, "variance of '" + rec.id + "'"));
    }
    auto& bytes = w.bytes();
    w.u32(crc32_of(bytes.data(), bytes.size()));
    return std::move(bytes);
}

inline EmbeddingStore decode_store(const std::uint8_t* data, std::size_t size) {
    detail::ByteReader r(data, size);
    r.need(4, "magic");
    if (std::memcmp(data, kStoreMagic, 4) != 0) throw BadMagicError("bad magic: not a UECS store");
    r.u32("magic");
    const std::uint32_t version = r.u32("version");
    if (version != kStoreVersion) throw UnsupportedVersionError(version);
    const std::uint32_t dim = r.u32("dim");
    if (dim == 0) throw FormatError("store dimension must be >= 1");
    const std::uint64_t count = r.u64("count");
    std::string name = r.str("model name");
    if (!valid_utf8(name)) throw FormatError("model name is not valid UTF-8");

    EmbeddingStore store(std::move(name), dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t rec_offset = r.offset();
        std::string id = r.str("record id");
        if (id.empty()) throw FormatError("empty record id at byte offset " + std::to_string(rec_offset));
        if (!valid_utf8(id)) throw FormatError("record id at byte offset " + std::to_string(rec_offset) + " is not valid UTF-8");
        if (store.find(id)) throw FormatError("duplicate record id '" + id + "'");
        r.need(std::size_t{8} * dim, "record values");
        Vector mean(dim), var(dim);
        for (auto& m : mean) m = r.f32("mean");
        for (auto& v : var) v = r.f32("variance");
        for (std::uint32_t d = 0; d < dim; ++d) {
            if (!std::isfinite(mean[d]) || !std::isfinite(var[d]))
                throw FormatError("non-finite value in record '" + id + "'");
            if (var[d] < 0.0) throw NegativeVarianceError("negative variance in record '" + id + "'");
        }
        store.add(std::move(id), GaussianEmbedding(std::move(mean), std::move(var)));
    }
    const std::size_t body = r.offset();
    switch (r.remaining()) {
        case 0: break;
        case 4: {
            const std::uint32_t stored = r.u32("checksum");
            if (stored != crc32_of(data, body)) throw ChecksumError("store checksum mismatch");
            break;
        }
        case 1:
        case 2:
        case 3: throw TruncatedError(body, "checksum");
        default:
            throw FormatError("unexpected " + std::to_string(r.remaining()) + " trailing bytes at byte offset " +
                              std::to_string(body));
    }
    return store;
}

inline EmbeddingStore decode_store(const Bytes& bytes) { return decode_store(bytes.data(), bytes.size()); }

inline Bytes read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
    return bytes;
}

// Writes to a sibling temporary, fsyncs, then renames over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t size) {
    auto tmp = path;
    tmp += ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
    const bool ok = std::fwrite(data, 1, size, f) == size && std::fflush(f) == 0 && ::fsync(fileno(f)) == 0;
    if (std::fclose(f) != 0 || !ok) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw IoError("write failure on '" + path.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename into '" + path.string() + "': " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, text.data(), text.size());
}

inline void write_store(const EmbeddingStore& store, const std::filesystem::path& path) {
    const Bytes bytes = encode_store(store);
    write_file_atomic(path, bytes.data(), bytes.size());
}

inline EmbeddingStore read_store(const std::filesystem::path& path) { return decode_store(read_file_bytes(path)); }

}  // namespace uec
