#include "ncodec/container.hpp"

#include <cstring>
#include <fstream>

#include "ncodec/error.hpp"

namespace ncodec {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'N', 'C', 'D', 'C', 'K', 'P', 'T', '\0'};

class Writer {
public:
    void bytes(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    template <class T>
    void le(T v) {
        for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<uint8_t>((uint64_t(v) >> (8 * i)) & 0xff));
    }
    std::vector<uint8_t> out;
};

class Reader {
public:
    Reader(const std::vector<uint8_t>& b, std::string origin) : buf(b), origin_(std::move(origin)) {}
    const uint8_t* take(size_t n, const char* what) {
        if (pos + n > buf.size())
            throw Error(ErrorKind::corrupt, origin_ + ": truncated while reading " + what + " at byte " +
                                                std::to_string(pos));
        const uint8_t* p = buf.data() + pos;
        pos += n;
        return p;
    }
    template <class T>
    T le(const char* what) {
        const uint8_t* p = take(sizeof(T), what);
        uint64_t v = 0;
        for (size_t i = 0; i < sizeof(T); ++i) v |= uint64_t(p[i]) << (8 * i);
        return static_cast<T>(v);
    }
    const std::vector<uint8_t>& buf;
    size_t pos = 0;

private:
    std::string origin_;
};

}  // namespace

uint64_t fnv1a64(const void* data, size_t n, uint64_t seed) {
    uint64_t h = seed;
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string to_string(DType t) {
    switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::u32: return "u32";
    }
    return "?";
}

const NamedArray* Container::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

const NamedArray& Container::require(const std::string& name) const {
    const NamedArray* a = find(name);
    if (!a) throw Error(ErrorKind::compatibility, "checkpoint lacks array '" + name + "'");
    return *a;
}

void Container::add(const std::string& name, const Tensor& t) {
    NamedArray a;
    a.name = name;
    a.dtype = DType::f32;
    a.shape = t.shape();
    a.f32 = t.storage();
    arrays.push_back(std::move(a));
}

void Container::add(const std::string& name, Shape shape, std::vector<double> values) {
    NamedArray a;
    a.name = name;
    a.dtype = DType::f64;
    a.shape = std::move(shape);
    a.f64 = std::move(values);
    arrays.push_back(std::move(a));
}

void Container::add(const std::string& name, Shape shape, std::vector<uint32_t> values) {
    NamedArray a;
    a.name = name;
    a.dtype = DType::u32;
    a.shape = std::move(shape);
    a.u32 = std::move(values);
    arrays.push_back(std::move(a));
}

std::vector<std::string> Container::manifest() const {
    std::vector<std::string> out;
    for (const auto& a : arrays) out.push_back(a.name + " " + to_string(a.dtype) + " " + shape_str(a.shape));
    return out;
}

std::vector<uint8_t> serialize_container(const Container& c) {
    Writer w;
    w.bytes(kMagic, 8);
    w.le<uint32_t>(kContainerVersion);
    const std::string meta = c.meta.dump();
    w.le<uint64_t>(meta.size());
    w.bytes(meta.data(), meta.size());
    w.le<uint32_t>(static_cast<uint32_t>(c.arrays.size()));
    for (const auto& a : c.arrays) {
        if (a.name.size() > 0xffff) throw Error(ErrorKind::format, "array name too long: " + a.name);
        w.le<uint16_t>(static_cast<uint16_t>(a.name.size()));
        w.bytes(a.name.data(), a.name.size());
        w.le<uint8_t>(static_cast<uint8_t>(a.dtype));
        w.le<uint8_t>(static_cast<uint8_t>(a.shape.size()));
        for (int64_t d : a.shape) w.le<uint64_t>(static_cast<uint64_t>(d));
        const int64_t n = a.numel();
        switch (a.dtype) {
        case DType::f32:
            if (int64_t(a.f32.size()) != n) throw Error(ErrorKind::shape, "array " + a.name + " size mismatch");
            for (float v : a.f32) {
                uint32_t u;
                std::memcpy(&u, &v, 4);
                w.le<uint32_t>(u);
            }
            break;
        case DType::f64:
            if (int64_t(a.f64.size()) != n) throw Error(ErrorKind::shape, "array " + a.name + " size mismatch");
            for (double v : a.f64) {
                uint64_t u;
                std::memcpy(&u, &v, 8);
                w.le<uint64_t>(u);
            }
            break;
        case DType::u32:
            if (int64_t(a.u32.size()) != n) throw Error(ErrorKind::shape, "array " + a.name + " size mismatch");
            for (uint32_t v : a.u32) w.le<uint32_t>(v);
            break;
        }
    }
    w.le<uint64_t>(fnv1a64(w.out.data(), w.out.size()));
    return w.out;
}

Container parse_container(const std::vector<uint8_t>& bytes, const std::string& origin) {
    Reader r(bytes, origin);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw Error(ErrorKind::corrupt, origin + ": not a checkpoint container (bad magic)");
    r.pos = 8;
    const uint32_t version = r.le<uint32_t>("version");
    if (version != kContainerVersion)
        throw Error(ErrorKind::compatibility, origin + ": unsupported container version " + std::to_string(version));
    if (bytes.size() < 8 + 4 + 8 + 4 + 8) throw Error(ErrorKind::corrupt, origin + ": container truncated");
    const size_t body = bytes.size() - 8;
    uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= uint64_t(bytes[body + i]) << (8 * i);
    if (stored != fnv1a64(bytes.data(), body)) throw Error(ErrorKind::corrupt, origin + ": checksum mismatch");

    Container c;
    const uint64_t meta_len = r.le<uint64_t>("metadata length");
    const uint8_t* mp = r.take(meta_len, "metadata");
    try {
        c.meta = nlohmann::json::parse(mp, mp + meta_len);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::corrupt, origin + ": metadata is not valid JSON: " + e.what());
    }
    const uint32_t count = r.le<uint32_t>("array count");
    for (uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        const uint16_t nl = r.le<uint16_t>("array name length");
        const uint8_t* np = r.take(nl, "array name");
        a.name.assign(reinterpret_cast<const char*>(np), nl);
        const uint8_t dt = r.le<uint8_t>("dtype");
        if (dt > 2) throw Error(ErrorKind::corrupt, origin + ": unknown dtype for " + a.name);
        a.dtype = static_cast<DType>(dt);
        const uint8_t rank = r.le<uint8_t>("rank");
        for (int k = 0; k < rank; ++k) a.shape.push_back(static_cast<int64_t>(r.le<uint64_t>("dims")));
        const int64_t n = a.numel();
        const size_t width = a.dtype == DType::f64 ? 8 : 4;
        if (n < 0 || size_t(n) > (body - r.pos) / width)
            throw Error(ErrorKind::corrupt, origin + ": array " + a.name + " exceeds the file");
        if (a.dtype == DType::f32) {
            a.f32.resize(n);
            for (int64_t j = 0; j < n; ++j) {
                const uint32_t u = r.le<uint32_t>("data");
                std::memcpy(&a.f32[j], &u, 4);
            }
        } else if (a.dtype == DType::f64) {
            a.f64.resize(n);
            for (int64_t j = 0; j < n; ++j) {
                const uint64_t u = r.le<uint64_t>("data");
                std::memcpy(&a.f64[j], &u, 8);
            }
        } else {
            a.u32.resize(n);
            for (int64_t j = 0; j < n; ++j) a.u32[j] = r.le<uint32_t>("data");
        }
        c.arrays.push_back(std::move(a));
    }
    if (r.pos != body) throw Error(ErrorKind::corrupt, origin + ": trailing bytes after arrays");
    return c;
}

void write_container(const fs::path& path, const Container& c) {
    const auto bytes = serialize_container(c);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw Error(ErrorKind::io, "cannot write " + tmp.string());
        os.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        if (!os) throw Error(ErrorKind::io, "failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

Container read_container(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorKind::prerequisite, "checkpoint not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_container(bytes, path.string());
}

}  // namespace ncodec
