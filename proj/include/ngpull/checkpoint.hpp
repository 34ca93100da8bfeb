#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ngpull/adam.hpp"
#include "ngpull/sdf_model.hpp"

namespace ngp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

// Container layout (all little-endian):
//   "NGPM" | u32 version
//   3 x plane blob: u32 N, u32 C, f32[N*N*C]
//   decoder blob:   u32 layer count, per layer (u32 out, u32 in,
//                   f32 weights[out*in], f32 bias[out])
//   2 x adam blob (decoder group, tri-plane group):
//                   u64 step, u64 count, f32 m[count], f32 v[count]
//   config echo:    u64 byte length, UTF-8 JSON
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    SdfModel<float> model;
    AdamState<float> adam_decoder;
    AdamState<float> adam_triplane;
    std::string config_echo;
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
inline void write_f32s(std::ostream& os, const float* data, std::size_t n) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw std::runtime_error(std::string("corrupt checkpoint: truncated ") + what);
    return v;
}
inline std::uint64_t read_u64(std::istream& is, const char* what) {
    std::uint64_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw std::runtime_error(std::string("corrupt checkpoint: truncated ") + what);
    return v;
}
inline void read_f32s(std::istream& is, float* data, std::size_t n, const char* what) {
    if (!is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float))))
        throw std::runtime_error(std::string("corrupt checkpoint: truncated ") + what);
}

inline void write_adam(std::ostream& os, const AdamState<float>& state) {
    write_u64(os, static_cast<std::uint64_t>(state.step));
    write_u64(os, state.m.size());
    write_f32s(os, state.m.data(), state.m.size());
    write_f32s(os, state.v.data(), state.v.size());
}

inline AdamState<float> read_adam(std::istream& is) {
    AdamState<float> state;
    state.step = static_cast<std::int64_t>(read_u64(is, "adam step"));
    const std::uint64_t count = read_u64(is, "adam count");
    state.m.resize(count);
    state.v.resize(count);
    read_f32s(is, state.m.data(), count, "adam first moments");
    read_f32s(is, state.v.data(), count, "adam second moments");
    return state;
}

}  // namespace detail

inline void save_checkpoint(const SdfModel<float>& model, const AdamState<float>& adam_decoder,
                            const AdamState<float>& adam_triplane, const std::string& config_echo,
                            const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    os.write("NGPM", 4);
    detail::write_u32(os, kCheckpointVersion);

    for (int p = 0; p < 3; ++p) {
        detail::write_u32(os, static_cast<std::uint32_t>(model.triplane.resolution));
        detail::write_u32(os, static_cast<std::uint32_t>(model.triplane.channels));
        const auto& plane = model.triplane.planes[static_cast<std::size_t>(p)];
        detail::write_f32s(os, plane.data(), plane.size());
    }

    const auto& dec = model.decoder;
    detail::write_u32(os, 3);
    auto write_layer = [&os](const avec<float>& w, const avec<float>& b,
                             std::uint32_t out, std::uint32_t in) {
        detail::write_u32(os, out);
        detail::write_u32(os, in);
        detail::write_f32s(os, w.data(), w.size());
        detail::write_f32s(os, b.data(), b.size());
    };
    write_layer(dec.w1, dec.b1, static_cast<std::uint32_t>(dec.hidden), static_cast<std::uint32_t>(dec.channels));
    write_layer(dec.w2, dec.b2, static_cast<std::uint32_t>(dec.hidden), static_cast<std::uint32_t>(dec.hidden));
    write_layer(dec.w3, dec.b3, 1, static_cast<std::uint32_t>(dec.hidden));

    detail::write_adam(os, adam_decoder);
    detail::write_adam(os, adam_triplane);

    detail::write_u64(os, config_echo.size());
    os.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
    if (!os) throw std::runtime_error("write failed for checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "NGPM", 4) != 0)
        throw std::runtime_error("corrupt checkpoint: bad magic in '" + path + "'");
    const std::uint32_t version = detail::read_u32(is, "version");
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    int n = 0, c = 0;
    for (int p = 0; p < 3; ++p) {
        const auto pn = static_cast<int>(detail::read_u32(is, "plane resolution"));
        const auto pc = static_cast<int>(detail::read_u32(is, "plane channels"));
        if (p == 0) {
            n = pn;
            c = pc;
            ckpt.model.triplane = TriPlane<float>(n, c);
        } else if (pn != n || pc != c) {
            throw std::runtime_error("corrupt checkpoint: mismatched plane headers");
        }
        auto& plane = ckpt.model.triplane.planes[static_cast<std::size_t>(p)];
        detail::read_f32s(is, plane.data(), plane.size(), "plane data");
    }

    const std::uint32_t layers = detail::read_u32(is, "decoder layer count");
    if (layers != 3) throw std::runtime_error("corrupt checkpoint: expected 3 decoder layers");
    const auto h1_out = detail::read_u32(is, "layer shape");
    const auto h1_in = detail::read_u32(is, "layer shape");
    ckpt.model.decoder = Decoder<float>(static_cast<int>(h1_in), static_cast<int>(h1_out));
    detail::read_f32s(is, ckpt.model.decoder.w1.data(), ckpt.model.decoder.w1.size(), "decoder weights");
    detail::read_f32s(is, ckpt.model.decoder.b1.data(), ckpt.model.decoder.b1.size(), "decoder bias");
    const auto h2_out = detail::read_u32(is, "layer shape");
    const auto h2_in = detail::read_u32(is, "layer shape");
    if (h2_out != h1_out || h2_in != h1_out) throw std::runtime_error("corrupt checkpoint: bad hidden layer shape");
    detail::read_f32s(is, ckpt.model.decoder.w2.data(), ckpt.model.decoder.w2.size(), "decoder weights");
    detail::read_f32s(is, ckpt.model.decoder.b2.data(), ckpt.model.decoder.b2.size(), "decoder bias");
    const auto h3_out = detail::read_u32(is, "layer shape");
    const auto h3_in = detail::read_u32(is, "layer shape");
    if (h3_out != 1 || h3_in != h1_out) throw std::runtime_error("corrupt checkpoint: bad output layer shape");
    detail::read_f32s(is, ckpt.model.decoder.w3.data(), ckpt.model.decoder.w3.size(), "decoder weights");
    detail::read_f32s(is, ckpt.model.decoder.b3.data(), ckpt.model.decoder.b3.size(), "decoder bias");
    ckpt.model.decoder.sync_transposed();
    ckpt.model.epsilon = SdfModel<float>::epsilon_for_resolution(n);

    ckpt.adam_decoder = detail::read_adam(is);
    ckpt.adam_triplane = detail::read_adam(is);
    if (ckpt.adam_decoder.size() != ckpt.model.decoder.parameter_count())
        throw std::runtime_error("corrupt checkpoint: decoder adam state size mismatch");
    if (ckpt.adam_triplane.size() != 3 * ckpt.model.triplane.entries_per_plane())
        throw std::runtime_error("corrupt checkpoint: tri-plane adam state size mismatch");

    const std::uint64_t echo_len = detail::read_u64(is, "config echo length");
    ckpt.config_echo.resize(echo_len);
    if (echo_len > 0 && !is.read(ckpt.config_echo.data(), static_cast<std::streamsize>(echo_len)))
        throw std::runtime_error("corrupt checkpoint: truncated config echo");
    return ckpt;
}

}  // namespace ngp
