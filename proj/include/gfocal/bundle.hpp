// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gfocal/tensor.hpp"

namespace gfocal {

// On-disk layout, all integers little-endian:
//   "GFTB" | u32 version | u32 entry count |
//   per entry: u16 name length | UTF-8 name | u8 dtype (1=f32, 2=f64) | u8 rank |
//              u64 dims[rank] | row-major payload
inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr char kBundleMagic[4] = {'G', 'F', 'T', 'B'};

struct BundleEntry {
    std::string name;
    DType dtype = DType::f64;
    Shape dims;
    std::vector<std::uint8_t> payload;

    Tensor to_tensor() const;
    static BundleEntry from_tensor(std::string name, const Tensor& t);
    static BundleEntry from_tensor(std::string name, const Tensor& t, DType storage);
};

/// Ordered collection of named arrays. Payload bytes are kept verbatim, so a
/// read -> write cycle reproduces the file byte for byte.
class TensorBundle {
public:
    void add(BundleEntry entry);
    void put(std::string name, const Tensor& t) { add(BundleEntry::from_tensor(std::move(name), t)); }
    void put(std::string name, const Tensor& t, DType storage) {
        add(BundleEntry::from_tensor(std::move(name), t, storage));
    }
    void put_scalar(std::string name, double value) { put(std::move(name), Tensor::scalar(value)); }

    bool contains(const std::string& name) const;
    const BundleEntry& entry(const std::string& name) const;
    /// Throws MissingField when absent.
    Tensor tensor(const std::string& name) const;
    double scalar(const std::string& name) const { return tensor(name).item(); }

    const std::vector<BundleEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::vector<std::uint8_t> serialize() const;
    /// Throws Format with the byte offset of the first inconsistency.
    static TensorBundle parse(std::span<const std::uint8_t> bytes);

    /// Writes to a temporary sibling and renames, so readers never observe a partial file.
    void write_file(const std::filesystem::path& path) const;
    static TensorBundle read_file(const std::filesystem::path& path);

private:
    std::vector<BundleEntry> entries_;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

}  // namespace gfocal
