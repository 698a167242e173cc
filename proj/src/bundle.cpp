// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/bundle.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace gfocal {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
    return v;
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    const std::uint8_t* take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            fail(ErrorKind::Format, "truncated bundle at byte offset " + std::to_string(pos_) + " while reading " +
                                        what + " (need " + std::to_string(n) + " bytes, " +
                                        std::to_string(bytes_.size() - pos_) + " left)");
        }
        const std::uint8_t* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    template <typename T>
    T read(const char* what) {
        return get_le<T>(take(sizeof(T), what));
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

Tensor BundleEntry::to_tensor() const {
    const std::size_t n = shape_numel(dims);
    std::vector<double> values(n);
    const std::uint8_t* p = payload.data();
    if (dtype == DType::f32) {
        for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
    } else {
        for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i));
    }
    return Tensor(dims, std::move(values), dtype);
}

BundleEntry BundleEntry::from_tensor(std::string name, const Tensor& t) { return from_tensor(std::move(name), t, t.dtype()); }

BundleEntry BundleEntry::from_tensor(std::string name, const Tensor& t, DType storage) {
    BundleEntry e;
    e.name = std::move(name);
    e.dtype = storage;
    e.dims = t.shape();
    e.payload.reserve(t.numel() * dtype_size(storage));
    for (double v : t.data()) {
        if (storage == DType::f32) put_le(e.payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        else put_le(e.payload, std::bit_cast<std::uint64_t>(v));
    }
    return e;
}

void TensorBundle::add(BundleEntry entry) {
    if (entry.name.empty() || entry.name.size() > std::numeric_limits<std::uint16_t>::max()) {
        fail(ErrorKind::Format, "bundle entry name must be 1..65535 bytes");
    }
    if (entry.dims.size() > std::numeric_limits<std::uint8_t>::max()) {
        fail(ErrorKind::Format, "bundle entry '" + entry.name + "' has rank above 255");
    }
    if (entry.payload.size() != shape_numel(entry.dims) * dtype_size(entry.dtype)) {
        fail(ErrorKind::Format, "bundle entry '" + entry.name + "' payload does not match its dims");
    }
    if (contains(entry.name)) fail(ErrorKind::Format, "duplicate bundle entry '" + entry.name + "'");
    entries_.push_back(std::move(entry));
}

bool TensorBundle::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const BundleEntry& e) { return e.name == name; });
}

const BundleEntry& TensorBundle::entry(const std::string& name) const {
    for (const BundleEntry& e : entries_)
        if (e.name == name) return e;
    fail(ErrorKind::MissingField, "bundle has no entry '" + name + "'");
}

Tensor TensorBundle::tensor(const std::string& name) const { return entry(name).to_tensor(); }

std::vector<std::uint8_t> TensorBundle::serialize() const {
    std::vector<std::uint8_t> out(std::begin(kBundleMagic), std::end(kBundleMagic));
    put_le<std::uint32_t>(out, kBundleVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
    for (const BundleEntry& e : entries_) {
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(static_cast<std::uint8_t>(e.dtype));
        out.push_back(static_cast<std::uint8_t>(e.dims.size()));
        for (std::size_t d : e.dims) put_le<std::uint64_t>(out, d);
        out.insert(out.end(), e.payload.begin(), e.payload.end());
    }
    return out;
}

TensorBundle TensorBundle::parse(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const std::uint8_t* magic = r.take(4, "magic");
    if (std::memcmp(magic, kBundleMagic, 4) != 0) fail(ErrorKind::Format, "bad magic at byte offset 0 (expected GFTB)");
    const std::size_t version_at = r.pos();
    const auto version = r.read<std::uint32_t>("version");
    if (version != kBundleVersion) {
        fail(ErrorKind::Format, "unsupported bundle version " + std::to_string(version) + " at byte offset " +
                                    std::to_string(version_at));
    }
    const auto count = r.read<std::uint32_t>("entry count");
    TensorBundle bundle;
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::size_t entry_at = r.pos();
        BundleEntry e;
        const auto name_len = r.read<std::uint16_t>("name length");
        const std::uint8_t* name = r.take(name_len, "name");
        e.name.assign(reinterpret_cast<const char*>(name), name_len);
        const std::size_t dtype_at = r.pos();
        const auto code = r.read<std::uint8_t>("dtype");
        if (code != 1 && code != 2) {
            fail(ErrorKind::Format, "unknown dtype code " + std::to_string(code) + " at byte offset " +
                                        std::to_string(dtype_at));
        }
        e.dtype = static_cast<DType>(code);
        const auto rank = r.read<std::uint8_t>("rank");
        std::size_t numel = 1;
        bool overflow = false;
        for (std::uint8_t d = 0; d < rank; ++d) {
            const auto dim = r.read<std::uint64_t>("dims");
            e.dims.push_back(static_cast<std::size_t>(dim));
            if (dim != 0 && numel > std::numeric_limits<std::size_t>::max() / dim) overflow = true;
            numel *= static_cast<std::size_t>(dim);
        }
        const std::size_t esize = dtype_size(e.dtype);
        if (overflow || numel > r.remaining() / esize) {
            fail(ErrorKind::Format, "truncated payload for entry '" + e.name + "' at byte offset " +
                                        std::to_string(r.pos()) + " (" + std::to_string(r.remaining()) +
                                        " bytes left)");
        }
        const std::uint8_t* payload = r.take(numel * esize, "payload");
        e.payload.assign(payload, payload + numel * esize);
        if (bundle.contains(e.name)) {
            fail(ErrorKind::Format, "duplicate entry '" + e.name + "' at byte offset " + std::to_string(entry_at));
        }
        bundle.entries_.push_back(std::move(e));
    }
    if (r.remaining() != 0) {
        fail(ErrorKind::Format, "trailing bytes after last entry at byte offset " + std::to_string(r.pos()));
    }
    return bundle;
}

void TensorBundle::write_file(const std::filesystem::path& path) const {
    const std::vector<std::uint8_t> bytes = serialize();
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) fail(ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!os) fail(ErrorKind::Io, "write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(ErrorKind::Io, "cannot move bundle into place at '" + path.string() + "'");
    }
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

TensorBundle TensorBundle::read_file(const std::filesystem::path& path) { return parse(read_bytes(path)); }

}  // namespace gfocal
