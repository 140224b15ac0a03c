#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncodec/tensor.hpp"

namespace ncodec {

enum class DType : uint8_t { f32 = 0, f64 = 1, u32 = 2 };

std::string to_string(DType t);

// One named array of a checkpoint. Only the vector matching dtype is used.
struct NamedArray {
    std::string name;
    DType dtype = DType::f32;
    Shape shape;
    std::vector<float> f32;
    std::vector<double> f64;
    std::vector<uint32_t> u32;

    int64_t numel() const { return shape_numel(shape); }
};

// Checkpoint container: a JSON metadata block plus named arrays.
//
// Layout (all integers little-endian):
//   magic "NCDCKPT\0" | u32 version | u64 meta_len | meta JSON (UTF-8)
//   u32 array_count, then per array:
//     u16 name_len | name | u8 dtype | u8 rank | u64 dims[rank] | data
//   u64 FNV-1a digest of every preceding byte
struct Container {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;
    const NamedArray& require(const std::string& name) const;
    void add(const std::string& name, const Tensor& t);
    void add(const std::string& name, Shape shape, std::vector<double> values);
    void add(const std::string& name, Shape shape, std::vector<uint32_t> values);
    // "name dtype [dims]" lines, one per array.
    std::vector<std::string> manifest() const;
};

constexpr uint32_t kContainerVersion = 1;

std::vector<uint8_t> serialize_container(const Container& c);
Container parse_container(const std::vector<uint8_t>& bytes, const std::string& origin = "<memory>");
// Written through a temporary file and renamed into place.
void write_container(const std::filesystem::path& path, const Container& c);
// Missing files raise ErrorKind::prerequisite; malformed ones ErrorKind::corrupt.
Container read_container(const std::filesystem::path& path);

uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 1469598103934665603ull);

}  // namespace ncodec
