#pragma once

#include <string>

#include "ringobs/binio.hpp"
#include "ringobs/common.hpp"
#include "ringobs/fno.hpp"

namespace ringobs {

// Self-describing operator checkpoint. Layout:
//   magic "FNOCKPT1"
//   u64 metadata length, metadata block (arch + creation seed + training step)
//   per tensor, in canonical layout order: length-prefixed name,
//     u64 value count, values as little-endian f64
// Serialization is fully deterministic, so save -> load -> save is byte-exact.
struct Checkpoint {
    FnoParams params;
    uint64_t creation_seed = 0;
    uint64_t training_step = 0;
};

namespace detail {

inline std::string encode_arch_meta(const FnoArch& a, uint64_t seed, uint64_t step) {
    std::string m;
    put_u32(m, static_cast<uint32_t>(a.dimensionality));
    put_u32(m, static_cast<uint32_t>(a.in_channels));
    put_u32(m, static_cast<uint32_t>(a.out_channels));
    put_u32(m, static_cast<uint32_t>(a.lift_width));
    put_u32(m, static_cast<uint32_t>(a.projection_hidden));
    put_u8(m, a.coord_channels ? 1 : 0);
    put_u32(m, static_cast<uint32_t>(a.layers()));
    for (int w : a.layer_widths) put_u32(m, static_cast<uint32_t>(w));
    for (int k : a.modes_per_layer) put_u32(m, static_cast<uint32_t>(k));
    if (a.dimensionality == 2)
        for (int k : a.modes_time) put_u32(m, static_cast<uint32_t>(k));
    put_u64(m, seed);
    put_u64(m, step);
    return m;
}

inline FnoArch decode_arch_meta(ByteReader& r, uint64_t& seed, uint64_t& step) {
    FnoArch a;
    a.dimensionality = static_cast<int>(r.u32());
    a.in_channels = static_cast<int>(r.u32());
    a.out_channels = static_cast<int>(r.u32());
    a.lift_width = static_cast<int>(r.u32());
    a.projection_hidden = static_cast<int>(r.u32());
    a.coord_channels = r.u8() != 0;
    uint32_t layers = r.u32();
    for (uint32_t i = 0; i < layers; ++i) a.layer_widths.push_back(static_cast<int>(r.u32()));
    for (uint32_t i = 0; i < layers; ++i) a.modes_per_layer.push_back(static_cast<int>(r.u32()));
    if (a.dimensionality == 2)
        for (uint32_t i = 0; i < layers; ++i) a.modes_time.push_back(static_cast<int>(r.u32()));
    seed = r.u64();
    step = r.u64();
    return a;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string buf = "FNOCKPT1";
    detail::put_str(buf,
                    detail::encode_arch_meta(ckpt.params.arch, ckpt.creation_seed,
                                             ckpt.training_step));
    for (const ParamSpec& s : ckpt.params.specs()) {
        detail::put_str(buf, s.name);
        detail::put_u64(buf, s.size);
        const double* v = ckpt.params.values.data() + s.offset;
        for (size_t i = 0; i < s.size; ++i) detail::put_f64(buf, v[i]);
    }
    return buf;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
    detail::ByteReader r(bytes);
    if (r.bytes(8) != "FNOCKPT1") throw data_error("checkpoint: bad magic");
    std::string meta = r.str();
    detail::ByteReader mr(meta);
    Checkpoint ckpt;
    FnoArch arch = detail::decode_arch_meta(mr, ckpt.creation_seed, ckpt.training_step);
    ckpt.params = FnoParams(arch);
    for (const ParamSpec& s : ckpt.params.specs()) {
        std::string name = r.str();
        if (name != s.name)
            throw shape_error("checkpoint: expected tensor " + s.name + ", found " + name);
        uint64_t count = r.u64();
        if (count != s.size)
            throw shape_error("checkpoint: tensor " + name + " has " + std::to_string(count) +
                              " values, arch expects " + std::to_string(s.size));
        double* v = ckpt.params.values.data() + s.offset;
        for (uint64_t i = 0; i < count; ++i) v[i] = r.f64();
    }
    if (r.remaining() != 0) throw data_error("checkpoint: trailing bytes");
    if (!ckpt.params.finite()) throw numeric_error("checkpoint: non-finite parameter");
    return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    detail::write_file(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return decode_checkpoint(detail::read_file(path));
}

}  // namespace ringobs
