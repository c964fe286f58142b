#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "oslr/kv.hpp"
#include "oslr/model.hpp"
#include "oslr/tensor.hpp"

namespace oslr {

// On-disk weight format, little-endian throughout:
//   magic "OSLR" | u32 version | u32 config length | config text (key = value)
//   | u32 tensor count | per tensor: u16 name length, name bytes, u8 ndim,
//     u32 dims..., u8 dtype tag (0 = f32, 1 = f64), raw element bytes.
inline constexpr char kCheckpointMagic[4] = {'O', 'S', 'L', 'R'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u16(std::ostream& out, uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    out.write(b, 2);
}

inline void put_u32(std::ostream& out, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

inline uint16_t get_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) throw FormatError("checkpoint: truncated file");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("truncated file");
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw FormatError("truncated file");
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

template <typename T>
inline uint8_t dtype_tag() {
    return sizeof(T) == 4 ? 0 : 1;
}

} // namespace detail

inline KvMap model_config_to_kv(const ModelConfig& cfg) {
    KvMap kv;
    kv.set("query_size", std::to_string(cfg.query_size));
    kv.set("target_size", std::to_string(cfg.target_size));
    kv.set("num_stages", std::to_string(cfg.num_stages));
    kv.set("stage_channels", int_list_to_string(cfg.stage_channels));
    kv.set("latent_dim", std::to_string(cfg.latent_dim));
    kv.set("cond_convs_per_stage", int_list_to_string(cfg.cond_convs_per_stage));
    kv.set("seg_convs_per_stage", std::to_string(cfg.seg_convs_per_stage));
    kv.set("fusion_mode", to_string(cfg.fusion_mode));
    kv.set("fuse_bottleneck", cfg.fuse_bottleneck ? "true" : "false");
    kv.set("init_mode", to_string(cfg.init_mode));
    kv.set("precision", cfg.precision);
    return kv;
}

inline ModelConfig model_config_from_kv(const KvMap& kv) {
    ModelConfig cfg;
    cfg.query_size = static_cast<int>(kv.get_int("query_size"));
    cfg.target_size = static_cast<int>(kv.get_int("target_size"));
    cfg.num_stages = static_cast<int>(kv.get_int("num_stages"));
    cfg.stage_channels = kv.get_int_list("stage_channels");
    cfg.latent_dim = static_cast<int>(kv.get_int("latent_dim"));
    cfg.cond_convs_per_stage = kv.get_int_list("cond_convs_per_stage");
    cfg.seg_convs_per_stage = static_cast<int>(kv.get_int("seg_convs_per_stage"));
    cfg.fusion_mode = fusion_mode_from_string(kv.get("fusion_mode"));
    cfg.fuse_bottleneck = kv.get_bool("fuse_bottleneck");
    cfg.init_mode = init_mode_from_string(kv.get("init_mode"));
    cfg.precision = kv.get_or("precision", "single");
    cfg.validate();
    return cfg;
}

template <typename T>
void save_checkpoint(const std::string& path, const LogoModel<T>& model,
                     const std::map<std::string, std::string>& extras = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, 4);
    detail::put_u32(out, kCheckpointVersion);

    KvMap cfg = model_config_to_kv(model.cfg);
    for (const auto& kv : extras) cfg.set(kv.first, kv.second);
    std::string cfg_text = cfg.to_text();
    detail::put_u32(out, static_cast<uint32_t>(cfg_text.size()));
    out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

    detail::put_u32(out, static_cast<uint32_t>(model.params.named.size()));
    for (const auto& [name, tensor] : model.params.named) {
        detail::put_u16(out, static_cast<uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        out.put(static_cast<char>(tensor.ndim()));
        for (int i = 0; i < tensor.ndim(); ++i)
            detail::put_u32(out, static_cast<uint32_t>(tensor.dim(i)));
        out.put(static_cast<char>(detail::dtype_tag<T>()));
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.numel() * static_cast<int64_t>(sizeof(T))));
    }
    if (!out) throw FormatError("checkpoint write failed: " + path);
}

template <typename T>
struct LoadedCheckpoint {
    LogoModel<T> model;
    std::map<std::string, std::string> extras;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic");
    uint32_t version = detail::get_u32(in);
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));

    uint32_t cfg_len = detail::get_u32(in);
    std::string cfg_text(cfg_len, '\0');
    in.read(cfg_text.data(), cfg_len);
    if (!in) throw FormatError("checkpoint: truncated config block");
    KvMap kv = KvMap::parse(cfg_text, path);

    LoadedCheckpoint<T> result;
    result.model.cfg = model_config_from_kv(kv);
    // Keys beyond the model description are reported back as extras.
    KvMap model_keys = model_config_to_kv(result.model.cfg);
    for (const auto& [k, v] : kv.entries())
        if (!model_keys.has(k)) result.extras[k] = v;

    result.model.params = init_parameters<T>(result.model.cfg, 0);

    uint32_t count = detail::get_u32(in);
    if (count != result.model.params.named.size())
        throw FormatError("checkpoint: tensor count mismatch");
    for (uint32_t t = 0; t < count; ++t) {
        uint16_t name_len = detail::get_u16(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw FormatError("checkpoint: truncated tensor name");
        Tensor<T>* dest = nullptr;
        for (auto& [pname, tensor] : result.model.params.named)
            if (pname == name) {
                dest = &tensor;
                break;
            }
        if (!dest) throw FormatError("checkpoint: unknown tensor name " + name);
        int ndim = in.get();
        if (ndim < 0) throw FormatError("checkpoint: truncated tensor header");
        Shape shape(static_cast<size_t>(ndim));
        for (int i = 0; i < ndim; ++i) shape[static_cast<size_t>(i)] =
            static_cast<int>(detail::get_u32(in));
        if (shape != dest->shape())
            throw FormatError("checkpoint: shape mismatch for " + name + ": file has " +
                              shape_str(shape) + ", config expects " + shape_str(dest->shape()));
        int tag = in.get();
        if (tag != detail::dtype_tag<T>())
            throw FormatError("checkpoint: dtype mismatch for " + name);
        in.read(reinterpret_cast<char*>(dest->data()),
                static_cast<std::streamsize>(dest->numel() * static_cast<int64_t>(sizeof(T))));
        if (!in) throw FormatError("checkpoint: truncated tensor data");
    }
    return result;
}

} // namespace oslr
