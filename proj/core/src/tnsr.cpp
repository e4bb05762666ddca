#include "a2gnn/tnsr.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "tnsr i/o assumes a little-endian host");

namespace a2gnn {

namespace {

constexpr char kMagic[8] = {'A', '2', 'G', 'T', 'N', 'S', 'R', '\0'};
constexpr uint32_t kVersion = 1;

size_t dtype_size(TnsrType t) {
    switch (t) {
        case TnsrType::F32: return 4;
        case TnsrType::F64: return 8;
        case TnsrType::U8: return 1;
    }
    throw std::runtime_error("tnsr: unknown dtype tag");
}

template <typename T>
T read_le(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("tnsr: truncated file");
    return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

} // namespace

uint64_t TnsrSection::element_count() const {
    uint64_t n = 1;
    for (uint64_t d : dims) n *= d;
    return n;
}

std::vector<double> TnsrSection::as_f64() const {
    uint64_t n = element_count();
    std::vector<double> out(n);
    if (dtype == TnsrType::F64) {
        std::memcpy(out.data(), payload.data(), n * sizeof(double));
    } else if (dtype == TnsrType::F32) {
        const float* p = reinterpret_cast<const float*>(payload.data());
        for (uint64_t i = 0; i < n; ++i) out[i] = p[i];
    } else {
        for (uint64_t i = 0; i < n; ++i) out[i] = payload[i];
    }
    return out;
}

std::vector<uint8_t> TnsrSection::as_u8() const {
    if (dtype != TnsrType::U8) throw std::runtime_error("tnsr: section is not u8");
    return payload;
}

bool Tnsr::has(const std::string& name) const {
    for (const auto& [n, s] : sections)
        if (n == name) return true;
    return false;
}

const TnsrSection& Tnsr::at(const std::string& name) const {
    for (const auto& [n, s] : sections)
        if (n == name) return s;
    throw std::runtime_error("tnsr: missing section \"" + name + "\"");
}

void Tnsr::add_f64(const std::string& name, const std::vector<uint64_t>& dims,
                   const std::vector<double>& values) {
    TnsrSection s;
    s.dims = dims;
    s.dtype = TnsrType::F64;
    s.payload.resize(values.size() * sizeof(double));
    std::memcpy(s.payload.data(), values.data(), s.payload.size());
    if (s.element_count() != values.size())
        throw std::invalid_argument("tnsr: dims do not match value count for " + name);
    sections.emplace_back(name, std::move(s));
}

void Tnsr::add_f32(const std::string& name, const std::vector<uint64_t>& dims,
                   const std::vector<float>& values) {
    TnsrSection s;
    s.dims = dims;
    s.dtype = TnsrType::F32;
    s.payload.resize(values.size() * sizeof(float));
    std::memcpy(s.payload.data(), values.data(), s.payload.size());
    if (s.element_count() != values.size())
        throw std::invalid_argument("tnsr: dims do not match value count for " + name);
    sections.emplace_back(name, std::move(s));
}

void Tnsr::add_u8(const std::string& name, const std::vector<uint64_t>& dims,
                  const std::vector<uint8_t>& values) {
    TnsrSection s;
    s.dims = dims;
    s.dtype = TnsrType::U8;
    s.payload = values;
    if (s.element_count() != values.size())
        throw std::invalid_argument("tnsr: dims do not match value count for " + name);
    sections.emplace_back(name, std::move(s));
}

Tnsr read_tnsr(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("tnsr: cannot open " + path);

    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("tnsr: " + path + ": bad magic");
    uint32_t version = read_le<uint32_t>(in);
    if (version != kVersion)
        throw std::runtime_error("tnsr: " + path + ": unsupported version " + std::to_string(version));

    uint32_t count = read_le<uint32_t>(in);
    Tnsr t;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = read_le<uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw std::runtime_error("tnsr: truncated section name");

        TnsrSection s;
        uint32_t ndim = read_le<uint32_t>(in);
        s.dims.resize(ndim);
        for (uint32_t d = 0; d < ndim; ++d) s.dims[d] = read_le<uint64_t>(in);
        uint8_t tag = read_le<uint8_t>(in);
        if (tag < 1 || tag > 3)
            throw std::runtime_error("tnsr: " + path + ": bad dtype tag " + std::to_string(tag));
        s.dtype = static_cast<TnsrType>(tag);
        size_t bytes = s.element_count() * dtype_size(s.dtype);
        s.payload.resize(bytes);
        in.read(reinterpret_cast<char*>(s.payload.data()), static_cast<std::streamsize>(bytes));
        if (in.gcount() != static_cast<std::streamsize>(bytes))
            throw std::runtime_error("tnsr: " + path + ": truncated payload for \"" + name + "\"");
        t.sections.emplace_back(std::move(name), std::move(s));
    }
    return t;
}

void write_tnsr(const Tnsr& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("tnsr: cannot write " + path);
    out.write(kMagic, 8);
    write_le(out, kVersion);
    write_le(out, static_cast<uint32_t>(t.sections.size()));
    for (const auto& [name, s] : t.sections) {
        write_le(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_le(out, static_cast<uint32_t>(s.dims.size()));
        for (uint64_t d : s.dims) write_le(out, d);
        write_le(out, static_cast<uint8_t>(s.dtype));
        out.write(reinterpret_cast<const char*>(s.payload.data()),
                  static_cast<std::streamsize>(s.payload.size()));
    }
    if (!out) throw std::runtime_error("tnsr: write failed: " + path);
}

} // namespace a2gnn
