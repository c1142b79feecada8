#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "mtl_net.hpp"
#include "serialize.hpp"

namespace cpa {

/// Model plus the state needed to resume or reproduce training.
struct Checkpoint {
    nn::MultitaskNet model;
    nn::TaskMode mode = nn::TaskMode::Multitask;
    TrainConfig train{};
};

// Checkpoint layout (little-endian):
//   "CPA1" | u8 version | str header-json | u32 tensor count |
//   per tensor: str name | u8 role | u32 rank | u32 dims[rank] | u64 n | f64 data[n]
// The header JSON carries the network config, task mode, training config and
// the ADAM step counter. Roles: 0 value, 1 first moment, 2 second moment, 3 buffer.
inline constexpr std::uint8_t kCheckpointVersion = 1;

namespace detail {

inline void write_tensor(io::ByteWriter& w, const std::string& name, std::uint8_t role, const nn::Tensor& t) {
    w.str(name);
    w.u8(role);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.u64(t.size());
    for (double v : t.data) w.f64(v);
}

} // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(Checkpoint& ck) {
    io::ByteWriter w;
    w.magic("CPA1");
    w.u8(kCheckpointVersion);
    const json header = {{"network", to_json(ck.model.config())},
                         {"mode", std::string(nn::to_string(ck.mode))},
                         {"train", to_json(ck.train)},
                         {"adam_steps", ck.model.adam_steps()}};
    w.str(header.dump());
    const auto params = ck.model.params();
    const auto buffers = ck.model.buffers();
    w.u32(static_cast<std::uint32_t>(params.size() * 3 + buffers.size()));
    for (const auto* p : params) {
        detail::write_tensor(w, p->name, 0, p->value);
        detail::write_tensor(w, p->name, 1, p->m);
        detail::write_tensor(w, p->name, 2, p->v);
    }
    for (const auto* b : buffers) detail::write_tensor(w, b->name, 3, b->value);
    return w.take();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("CPA1", "checkpoint");
    const auto version = r.u8();
    require(version == kCheckpointVersion, ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version));
    json header;
    try {
        header = json::parse(r.str());
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Format, std::string("checkpoint header: ") + e.what());
    }
    nn::NetworkConfig net;
    from_json_into(header.at("network"), net);
    Checkpoint ck;
    ck.mode = nn::task_mode_from_string(header.at("mode").get<std::string>());
    from_json_into(header.at("train"), ck.train);
    ck.model = nn::MultitaskNet(net, 0);
    ck.model.set_adam_steps(header.at("adam_steps").get<std::uint64_t>());

    std::map<std::pair<std::string, int>, nn::Tensor*> slots;
    for (auto* p : ck.model.params()) {
        slots[{p->name, 0}] = &p->value;
        slots[{p->name, 1}] = &p->m;
        slots[{p->name, 2}] = &p->v;
    }
    for (auto* b : ck.model.buffers()) slots[{b->name, 3}] = &b->value;

    const std::uint32_t count = r.u32();
    require(count == slots.size(), ErrorKind::Format, "checkpoint tensor count does not match architecture");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        const int role = r.u8();
        auto it = slots.find({name, role});
        require(it != slots.end(), ErrorKind::Format, "unexpected tensor '" + name + "' in checkpoint");
        std::vector<int> shape(r.u32());
        for (auto& d : shape) d = static_cast<int>(r.u32());
        const std::uint64_t n = r.u64();
        nn::Tensor& dst = *it->second;
        require(shape == dst.shape && n == dst.size(), ErrorKind::Format, "shape mismatch for tensor '" + name + "'");
        for (auto& v : dst.data) v = r.f64();
        slots.erase(it);
    }
    require(slots.empty() && r.remaining() == 0, ErrorKind::Format, "checkpoint incomplete or has trailing bytes");
    return ck;
}

inline void save_checkpoint(const std::string& path, Checkpoint& ck) { io::write_file(path, encode_checkpoint(ck)); }

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

} // namespace cpa
