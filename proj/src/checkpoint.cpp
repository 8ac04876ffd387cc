#include "bridgelab/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bridgelab {

namespace {

constexpr char kMagic[4] = {'B', 'L', 'C', 'P'};
constexpr uint32_t kVersion = 1;

uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

void put_u32(std::string& buf, uint32_t v) { buf.append(reinterpret_cast<char*>(&v), 4); }
void put_u64(std::string& buf, uint64_t v) { buf.append(reinterpret_cast<char*>(&v), 8); }
void put_str(std::string& buf, const std::string& s) {
    put_u32(buf, static_cast<uint32_t>(s.size()));
    buf.append(s);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        const uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

uint64_t params_hash(const ParamStore& ps) {
    uint64_t h = 1469598103934665603ull;
    for (const auto& [name, p] : ps) {
        h = fnv1a(name.data(), name.size(), h);
        const unsigned char flag = p.trainable ? 1 : 0;
        h = fnv1a(&flag, 1, h);
        h = fnv1a(p.value.shape.data(), p.value.shape.size() * sizeof(int), h);
        h = fnv1a(p.value.data.data(), p.value.data.size() * sizeof(float), h);
    }
    return h;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u64(buf, c.fingerprint);
    put_u32(buf, static_cast<uint32_t>(c.provenance.size()));
    for (const auto& s : c.provenance) put_str(buf, s);
    put_u32(buf, static_cast<uint32_t>(c.params.size()));
    for (const auto& [name, p] : c.params) {
        put_str(buf, name);
        buf.push_back(p.trainable ? 1 : 0);
        put_u32(buf, static_cast<uint32_t>(p.value.rows()));
        put_u32(buf, static_cast<uint32_t>(p.value.cols()));
        buf.append(reinterpret_cast<const char*>(p.value.data.data()),
                   p.value.data.size() * sizeof(float));
    }
    put_u64(buf, fnv1a(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 16) throw std::runtime_error("checkpoint truncated");
    uint64_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
    if (fnv1a(buf.data(), buf.size() - 8) != stored)
        throw std::runtime_error("checkpoint checksum mismatch: " + path);

    Reader r{buf};
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    r.pos = 4;
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version: " + std::to_string(version));

    Checkpoint c;
    c.fingerprint = r.u64();
    const uint32_t n_prov = r.u32();
    for (uint32_t i = 0; i < n_prov; ++i) c.provenance.push_back(r.str());
    const uint32_t n_params = r.u32();
    for (uint32_t i = 0; i < n_params; ++i) {
        const std::string name = r.str();
        r.need(1);
        const bool trainable = buf[r.pos++] != 0;
        const int rows = static_cast<int>(r.u32());
        const int cols = static_cast<int>(r.u32());
        Tensor t = Tensor::zeros(rows, cols);
        r.need(t.data.size() * sizeof(float));
        std::memcpy(t.data.data(), buf.data() + r.pos, t.data.size() * sizeof(float));
        r.pos += t.data.size() * sizeof(float);
        c.params.add(name, std::move(t), trainable);
    }
    return c;
}

} // namespace bridgelab
