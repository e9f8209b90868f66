#include "vitfreeze/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace vitfreeze {

namespace {

constexpr char kMagic[4] = {'V', 'T', 'F', 'Z'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) throw IoError(path + ": truncated checkpoint");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (is.gcount() != 8) throw IoError(path + ": truncated checkpoint");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

float get_f32(std::istream& is, const std::string& path) {
    const uint32_t bits = get_u32(is, path);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void put_name(std::ostream& os, const std::string& name) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
}

std::string get_name(std::istream& is, const std::string& path) {
    const uint32_t len = get_u32(is, path);
    if (len > 1u << 20) throw IoError(path + ": absurd name length in checkpoint");
    std::string name(len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(len));
    if (is.gcount() != static_cast<std::streamsize>(len)) {
        throw IoError(path + ": truncated checkpoint");
    }
    return name;
}

}  // namespace

void write_checkpoint(const VitMimModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path);
    os.write(kMagic, 4);
    put_u32(os, 1);  // version
    const auto& named = model.named_params();
    put_u32(os, static_cast<uint32_t>(named.size()));
    for (const auto& [name, p] : named) {
        put_name(os, name);
        put_u32(os, static_cast<uint32_t>(p->rank()));
        for (int64_t d : p->shape) put_u64(os, static_cast<uint64_t>(d));
        for (double v : p->data) put_f32(os, static_cast<float>(v));
    }
    const auto& layers = model.layers();
    put_u32(os, static_cast<uint32_t>(layers.size()));
    for (const auto& l : layers) {
        put_name(os, l.name);
        os.put(l.frozen ? 1 : 0);
        put_u64(os, static_cast<uint64_t>(l.freeze_step));
    }
    if (!os) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError(path + ": not a model checkpoint (bad magic)");
    }
    Checkpoint ck;
    ck.version = get_u32(is, path);
    if (ck.version != 1) {
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(ck.version));
    }
    const uint32_t count = get_u32(is, path);
    ck.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        t.name = get_name(is, path);
        const uint32_t rank = get_u32(is, path);
        if (rank > 8) throw IoError(path + ": absurd tensor rank in checkpoint");
        Shape shape(rank);
        int64_t n = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int64_t>(get_u64(is, path));
            if (shape[d] < 0 || shape[d] > (1ll << 32)) {
                throw IoError(path + ": absurd tensor dim in checkpoint");
            }
            n *= shape[d];
        }
        std::vector<double> data(static_cast<size_t>(n));
        for (double& v : data) v = static_cast<double>(get_f32(is, path));
        t.value = Tensor(std::move(shape), std::move(data));
        ck.tensors.push_back(std::move(t));
    }
    const uint32_t nlayers = get_u32(is, path);
    ck.layers.reserve(nlayers);
    for (uint32_t i = 0; i < nlayers; ++i) {
        CheckpointLayerMeta m;
        m.name = get_name(is, path);
        const int c = is.get();
        if (c == EOF) throw IoError(path + ": truncated checkpoint");
        m.frozen = c != 0;
        m.freeze_step = static_cast<int64_t>(get_u64(is, path));
        ck.layers.push_back(std::move(m));
    }
    return ck;
}

}  // namespace vitfreeze
