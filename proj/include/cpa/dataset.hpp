#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "feature_rep.hpp"
#include "rng.hpp"
#include "serialize.hpp"
#include "threat_models.hpp"

namespace cpa {

struct DatasetRecord {
    std::uint64_t index = 0;
    SampleMeta meta{};
    FeatureTensor features{};
    ThreatKind intent = ThreatKind::NonAdversarial;
    double rho = 0.0;
    double raw_ber = 0.0;
};

struct Dataset {
    ExperimentConfig config{};
    std::vector<DatasetRecord> records;

    std::size_t size() const { return records.size(); }
};

/// Per-sample scenario: legit and adversary power/distance and noise drawn
/// uniformly and independently from the configured value sets.
inline ThreatScenario draw_scenario(ThreatKind kind, const ExperimentConfig& cfg, Rng& rng) {
    const auto& p = cfg.params;
    ThreatScenario s;
    s.kind = kind;
    s.frame = cfg.frame;
    s.legit_link = p.optics;
    s.legit_link.tx_power_watts = rng.pick(p.legit_power_w);
    s.legit_link.distance_m = rng.pick(p.legit_distance_km) * 1e3;
    LinkBudget adv = p.optics;
    adv.tx_power_watts = rng.pick(p.adversary_power_w);
    adv.distance_m = rng.pick(p.adversary_distance_km) * 1e3;
    s.noise.variance_dbw = rng.pick(p.noise_dbw);
    if (kind != ThreatKind::NonAdversarial) s.adversary_link = adv;
    s.obfuscation_prob = p.obfuscation_prob;
    s.estimation_error = p.estimation_error;
    return s;
}

/// Sample i of a dataset: kind cycles through the three intents, seed is
/// derived from (master seed, i).
inline DatasetRecord make_record(const ExperimentConfig& cfg, std::uint64_t master_seed, std::uint64_t index) {
    const ThreatKind kind = kAllThreatKinds[static_cast<std::size_t>(index % 3)];
    const std::uint64_t seed = derive_seed(master_seed, index);
    Rng scenario_rng(derive_seed(seed, 0));
    const ThreatScenario scenario = draw_scenario(kind, cfg, scenario_rng);
    const LabeledSample sample = generate_sample(scenario, seed);

    for (const auto& v : sample.received)
        require(std::isfinite(v.real()) && std::isfinite(v.imag()), ErrorKind::Invariant, "non-finite received sample");
    require(sample.rho <= 0.0 && sample.rho >= label_rho(0.0, cfg.frame), ErrorKind::Invariant, "label out of range");

    const auto body = remove_cp(sample.received, cfg.frame);
    const Matrix s = spectrogram(body, cfg.frame.n_subcarriers);
    auto [sup, inf] = local_extrema(s, cfg.features.disk_radius);
    for (std::size_t i = 0; i < s.data.size(); ++i)
        require(sup.data[i] >= s.data[i] && s.data[i] >= inf.data[i] && inf.data[i] >= 0.0, ErrorKind::Invariant,
                "feature channel ordering violated");
    DatasetRecord rec;
    rec.index = index;
    rec.meta = sample.meta;
    rec.features = stack_features(s, sup, inf);
    normalize(rec.features);
    // Stored as float32; keep the in-memory copy identical to a reloaded one.
    for (auto& v : rec.features.data) v = static_cast<double>(static_cast<float>(v));
    rec.intent = sample.intent;
    rec.rho = sample.rho;
    rec.raw_ber = sample.raw_ber;
    return rec;
}

/// Runs body(i) for i in [0, n) across worker threads. Results must be keyed
/// by i so output is independent of scheduling.
template <typename Body>
void parallel_for(std::size_t n, Body body, unsigned threads = std::thread::hardware_concurrency()) {
    threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

/// Generates count samples per intent. Deterministic in (cfg, master_seed)
/// regardless of the thread count.
inline Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t master_seed, int count_per_kind,
                             unsigned threads = std::thread::hardware_concurrency()) {
    cfg.validate();
    require(count_per_kind > 0, ErrorKind::Config, "count per kind must be positive");
    Dataset ds;
    ds.config = cfg;
    ds.config.master_seed = master_seed;
    ds.config.samples_per_kind = count_per_kind;
    const std::size_t n = static_cast<std::size_t>(count_per_kind) * 3;
    ds.records.resize(n);
    parallel_for(
        n,
        [&](std::size_t i) {
            try {
                ds.records[i] = make_record(cfg, master_seed, i);
            } catch (const Error& e) {
                fail(e.kind() == ErrorKind::Invariant ? ErrorKind::Invariant : e.kind(),
                     "sample " + std::to_string(i) + ": " + e.what());
            }
        },
        threads);
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset file ("CPAD"), little-endian:
//   "CPAD" | u8 version | str header-json
//   records: u32 byte length | record
//     record = str meta-json | u32 frames | u32 bins | f32 tensor[frames*bins*3]
//              | u8 intent | f64 rho | f64 raw_ber
//   footer: u64 offsets[count] | u64 count | u64 footer start | "CPAI"
// Header JSON holds the experiment config and format notes; tensors are
// channel-last (S, S_sup, S_inf), min-max normalized per channel, with the
// per-channel ranges in each record's meta. rho = log10(max(BER, 1/bits)).
// ---------------------------------------------------------------------------
inline constexpr std::uint8_t kDatasetVersion = 1;

namespace detail {

inline json meta_json(const DatasetRecord& r) {
    const auto& m = r.meta;
    return {{"index", r.index},
            {"seed", m.seed},
            {"kind", std::string(to_string(m.kind))},
            {"legit_power_w", m.legit_power_w},
            {"legit_distance_m", m.legit_distance_m},
            {"adversary_power_w", m.adversary_power_w},
            {"adversary_distance_m", m.adversary_distance_m},
            {"noise_dbw", m.noise_dbw},
            {"obfuscation_prob", m.obfuscation_prob},
            {"estimation_error", m.estimation_error},
            {"norm_min", r.features.norm.min},
            {"norm_max", r.features.norm.max}};
}

inline void apply_meta(const json& j, DatasetRecord& r) {
    r.index = j.at("index").get<std::uint64_t>();
    auto& m = r.meta;
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto kind = j.at("kind").get<std::string>();
    bool found = false;
    for (auto k : kAllThreatKinds)
        if (to_string(k) == kind) {
            m.kind = k;
            found = true;
        }
    require(found, ErrorKind::Format, "unknown kind '" + kind + "' in record meta");
    m.legit_power_w = j.at("legit_power_w").get<double>();
    m.legit_distance_m = j.at("legit_distance_m").get<double>();
    m.adversary_power_w = j.at("adversary_power_w").get<double>();
    m.adversary_distance_m = j.at("adversary_distance_m").get<double>();
    m.noise_dbw = j.at("noise_dbw").get<double>();
    m.obfuscation_prob = j.at("obfuscation_prob").get<double>();
    m.estimation_error = j.at("estimation_error").get<double>();
    r.features.norm.min = j.at("norm_min").get<std::array<double, 3>>();
    r.features.norm.max = j.at("norm_max").get<std::array<double, 3>>();
    r.features.norm.applied = true;
}

} // namespace detail

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
    io::ByteWriter w;
    w.magic("CPAD");
    w.u8(kDatasetVersion);
    const json header = {{"config", to_json(ds.config)},
                         {"format",
                          {{"rho", "log10(max(ber, 1/bits_per_sample))"},
                           {"power_units", "dBW"},
                           {"tensor", "float32 frames x bins x 3, channels S,S_sup,S_inf, per-channel min-max"}}}};
    w.str(header.dump());
    std::vector<std::uint64_t> offsets;
    offsets.reserve(ds.records.size());
    for (const auto& r : ds.records) {
        io::ByteWriter rec;
        rec.str(detail::meta_json(r).dump());
        rec.u32(static_cast<std::uint32_t>(r.features.frames));
        rec.u32(static_cast<std::uint32_t>(r.features.bins));
        for (double v : r.features.data) rec.f32(static_cast<float>(v));
        rec.u8(static_cast<std::uint8_t>(class_index(r.intent)));
        rec.f64(r.rho);
        rec.f64(r.raw_ber);
        offsets.push_back(w.size());
        w.u32(static_cast<std::uint32_t>(rec.size()));
        w.bytes(rec.data());
    }
    const std::uint64_t footer = w.size();
    for (auto o : offsets) w.u64(o);
    w.u64(offsets.size());
    w.u64(footer);
    w.magic("CPAI");
    return w.take();
}

/// Random-access view over an encoded dataset.
class DatasetReader {
public:
    explicit DatasetReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {
        io::ByteReader r(bytes_);
        r.expect_magic("CPAD", "dataset");
        const auto version = r.u8();
        require(version == kDatasetVersion, ErrorKind::Format, "unsupported dataset version " + std::to_string(version));
        try {
            header_ = json::parse(r.str());
        } catch (const json::parse_error& e) {
            fail(ErrorKind::Format, std::string("dataset header: ") + e.what());
        }
        from_json_into(header_.at("config"), config_);
        require(bytes_.size() >= 28, ErrorKind::Format, "dataset too short for index footer");
        io::ByteReader tail(bytes_);
        tail.seek(bytes_.size() - 4);
        tail.expect_magic("CPAI", "dataset index");
        tail.seek(bytes_.size() - 20);
        const std::uint64_t count = tail.u64();
        const std::uint64_t footer = tail.u64();
        require(footer + count * 8 + 20 == bytes_.size(), ErrorKind::Format, "dataset index footer inconsistent");
        tail.seek(footer);
        offsets_.resize(count);
        for (auto& o : offsets_) o = tail.u64();
    }

    static DatasetReader open(const std::string& path) { return DatasetReader(io::read_file(path)); }

    std::size_t size() const { return offsets_.size(); }
    const ExperimentConfig& config() const { return config_; }

    DatasetRecord record(std::size_t i) const {
        require(i < offsets_.size(), ErrorKind::InputSize, "record index out of range");
        io::ByteReader r(bytes_);
        r.seek(offsets_[i]);
        const std::uint32_t len = r.u32();
        io::ByteReader rec(r.bytes(len));
        DatasetRecord out;
        try {
            detail::apply_meta(json::parse(rec.str()), out);
        } catch (const json::exception& e) {
            fail(ErrorKind::Format, std::string("record meta: ") + e.what());
        }
        out.features.frames = static_cast<int>(rec.u32());
        out.features.bins = static_cast<int>(rec.u32());
        out.features.data.resize(static_cast<std::size_t>(out.features.frames) * out.features.bins * 3);
        for (auto& v : out.features.data) v = rec.f32();
        out.intent = threat_kind_from_index(rec.u8());
        out.rho = rec.f64();
        out.raw_ber = rec.f64();
        require(rec.remaining() == 0, ErrorKind::Format, "record has trailing bytes");
        return out;
    }

    Dataset load_all() const {
        Dataset ds;
        ds.config = config_;
        ds.records.reserve(size());
        for (std::size_t i = 0; i < size(); ++i) ds.records.push_back(record(i));
        return ds;
    }

private:
    std::vector<std::uint8_t> bytes_;
    json header_;
    ExperimentConfig config_{};
    std::vector<std::uint64_t> offsets_;
};

inline void save_dataset(const std::string& path, const Dataset& ds) { io::write_file(path, encode_dataset(ds)); }

inline Dataset load_dataset(const std::string& path) { return DatasetReader::open(path).load_all(); }

// ---------------------------------------------------------------------------
// Single received sample ("CPAS"): "CPAS" | u8 version | str header-json |
// u64 n | f64 re, f64 im per sample. Header holds frame, features, kind and
// labels when known.
// ---------------------------------------------------------------------------
struct SampleFile {
    FrameConfig frame{};
    FeatureConfig features{};
    LabeledSample sample{};
};

inline std::vector<std::uint8_t> encode_sample_file(const SampleFile& f) {
    io::ByteWriter w;
    w.magic("CPAS");
    w.u8(1);
    const json header = {{"frame", to_json(f.frame)},
                         {"features", to_json(f.features)},
                         {"kind", std::string(to_string(f.sample.intent))},
                         {"rho", f.sample.rho},
                         {"raw_ber", f.sample.raw_ber},
                         {"seed", f.sample.meta.seed}};
    w.str(header.dump());
    w.u64(f.sample.received.size());
    for (const auto& v : f.sample.received) {
        w.f64(v.real());
        w.f64(v.imag());
    }
    return w.take();
}

inline SampleFile decode_sample_file(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("CPAS", "sample file");
    require(r.u8() == 1, ErrorKind::Format, "unsupported sample file version");
    SampleFile f;
    try {
        const json h = json::parse(r.str());
        from_json_into(h.at("frame"), f.frame);
        from_json_into(h.at("features"), f.features);
        const auto kind = h.at("kind").get<std::string>();
        for (auto k : kAllThreatKinds)
            if (to_string(k) == kind) f.sample.intent = k;
        f.sample.rho = h.at("rho").get<double>();
        f.sample.raw_ber = h.at("raw_ber").get<double>();
        f.sample.meta.seed = h.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("sample header: ") + e.what());
    }
    f.sample.received.resize(r.u64());
    for (auto& v : f.sample.received) {
        const double re = r.f64();
        v = {re, r.f64()};
    }
    require(r.remaining() == 0, ErrorKind::Format, "sample file has trailing bytes");
    return f;
}

/// Raw received signal for sample `index`, drawn exactly as make_record draws it.
inline SampleFile make_sample_file(const ExperimentConfig& cfg, std::uint64_t master_seed, std::uint64_t index) {
    cfg.validate();
    const ThreatKind kind = kAllThreatKinds[static_cast<std::size_t>(index % 3)];
    const std::uint64_t seed = derive_seed(master_seed, index);
    Rng scenario_rng(derive_seed(seed, 0));
    SampleFile f;
    f.frame = cfg.frame;
    f.features = cfg.features;
    f.sample = generate_sample(draw_scenario(kind, cfg, scenario_rng), seed);
    return f;
}

/// Reads the first four bytes to tell dataset and sample files apart.
inline std::string file_magic(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) return {};
    return std::string(reinterpret_cast<const char*>(bytes.data()), 4);
}

} // namespace cpa
