#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace a2gnn {

// Named-tensor container used for score maps, feature maps, graphs and model
// parameters. Layout (all integers little-endian):
//
//   magic   8 bytes  "A2GTNSR\0"
//   u32     version (1)
//   u32     section count
//   per section:
//     u32   name length, then UTF-8 name bytes
//     u32   ndim
//     u64   dims[ndim]
//     u8    dtype tag (1 = f32, 2 = f64, 3 = u8)
//     payload, row-major, prod(dims) * dtype size bytes
//
// Round-trips are bitwise identical.

enum class TnsrType : uint8_t { F32 = 1, F64 = 2, U8 = 3 };

struct TnsrSection {
    std::vector<uint64_t> dims;
    TnsrType dtype = TnsrType::F64;
    std::vector<uint8_t> payload;

    uint64_t element_count() const;

    // Typed accessors; conversion between f32 and f64 is explicit and
    // round-trips are only bit-exact within one dtype.
    std::vector<double> as_f64() const;
    std::vector<uint8_t> as_u8() const;
};

struct Tnsr {
    std::vector<std::pair<std::string, TnsrSection>> sections;

    bool has(const std::string& name) const;
    const TnsrSection& at(const std::string& name) const;

    void add_f64(const std::string& name, const std::vector<uint64_t>& dims,
                 const std::vector<double>& values);
    void add_f32(const std::string& name, const std::vector<uint64_t>& dims,
                 const std::vector<float>& values);
    void add_u8(const std::string& name, const std::vector<uint64_t>& dims,
                const std::vector<uint8_t>& values);
};

Tnsr read_tnsr(const std::string& path);
void write_tnsr(const Tnsr& t, const std::string& path);

} // namespace a2gnn
