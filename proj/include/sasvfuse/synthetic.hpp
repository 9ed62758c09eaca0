#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "sasvfuse/embstore.hpp"
#include "sasvfuse/error.hpp"
#include "sasvfuse/features.hpp"
#include "sasvfuse/metrics.hpp"
#include "sasvfuse/protocol.hpp"

namespace sasvfuse {

/// Desk-scale stand-in for ASV/CM embeddings. Every partition gets its own
/// speakers; each trial has its own test utterance.
///
/// Stores: "asv" holds one enrollment vector per speaker and one vector per
/// test utterance; "cm" holds one vector per test utterance.
///
/// With xor_mode the first speaker_bits ASV dimensions encode a +-speaker_scale
/// bit pattern per speaker and the remaining ASV dimensions are per-utterance
/// noise. A target trial matches the enrolled pattern on every bit and a
/// nontarget trial differs on at least one, so target-vs-nontarget is a
/// conjunction of per-bit XORs: no linear function of the concatenated
/// features separates it. Without xor_mode speaker means are Gaussian.
/// Spoofed test utterances imitate the enrolled speaker in ASV space and
/// carry +spoof_offset on the first spoof_dims CM dimensions.
struct SyntheticSpec {
    std::size_t train_speakers = 48;
    std::size_t dev_speakers = 24;
    std::size_t eval_speakers = 24;
    std::size_t train_trials = 5000;
    std::size_t dev_trials = 2000;
    std::size_t eval_trials = 2000;
    double target_fraction = 0.4;
    double spoof_fraction = 0.3;
    std::size_t asv_dim = 8;
    std::size_t cm_dim = 4;
    std::size_t speaker_bits = 3;
    double speaker_scale = 1.0;
    double noise = 0.35;
    double spoof_offset = 8.0;
    std::size_t spoof_dims = 1;
    bool xor_mode = true;
    std::uint64_t seed = 0;
};

struct SyntheticData {
    StoreMap stores;
    TrialList train;
    TrialList dev;
    TrialList eval;
    FeatureSpec feature_spec;
};

inline void validate(const SyntheticSpec& s) {
    auto fail = [](const std::string& what) { throw ConfigError("pipeline", "synthetic spec: " + what); };
    if (s.target_fraction < 0 || s.spoof_fraction < 0 || s.target_fraction + s.spoof_fraction > 1) {
        fail("fractions must be nonnegative and sum to at most 1");
    }
    if (s.asv_dim == 0 || s.cm_dim == 0) fail("embedding dims must be positive");
    if (s.spoof_dims > s.cm_dim) fail("spoof_dims exceeds cm_dim");
    if (s.noise < 0 || s.speaker_scale <= 0) fail("noise must be nonnegative and speaker_scale positive");
    if (s.xor_mode && (s.speaker_bits == 0 || s.speaker_bits > s.asv_dim || s.speaker_bits > 16)) {
        fail("speaker_bits must be in [1, min(asv_dim, 16)]");
    }
    for (auto n : {s.train_speakers, s.dev_speakers, s.eval_speakers}) {
        if (n < 2) fail("each partition needs at least 2 speakers");
        if (s.xor_mode && n < (std::size_t{1} << s.speaker_bits)) fail("each partition needs a speaker per bit pattern");
    }
    if (s.train_trials == 0) fail("train_trials must be positive");
}

namespace detail {

class SyntheticBuilder {
public:
    SyntheticBuilder(const SyntheticSpec& spec, SyntheticData& out)
        : spec_(spec), out_(out), rng_(spec.seed), normal_(0.0, 1.0) {}

    TrialList partition(const std::string& name, std::size_t n_speakers, std::size_t n_trials) {
        auto& asv = out_.stores.at("asv");
        auto& cm = out_.stores.at("cm");
        const std::size_t patterns = std::size_t{1} << spec_.speaker_bits;
        std::vector<std::vector<double>> means(n_speakers);
        std::vector<std::size_t> pattern(n_speakers, 0);
        for (std::size_t s = 0; s < n_speakers; ++s) {
            means[s].assign(spec_.asv_dim, 0.0);
            if (spec_.xor_mode) {
                pattern[s] = s % patterns;
                for (std::size_t b = 0; b < spec_.speaker_bits; ++b) {
                    means[s][b] = ((pattern[s] >> b) & 1u) ? spec_.speaker_scale : -spec_.speaker_scale;
                }
            } else {
                for (auto& v : means[s]) v = spec_.speaker_scale * normal_(rng_);
            }
            asv.insert(speaker_id(name, s), asv_vector(means[s]));
        }
        TrialList trials;
        std::uniform_int_distribution<std::size_t> pick_spk(0, n_speakers - 1);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::size_t t = 0; t < n_trials; ++t) {
            const std::size_t enroll = pick_spk(rng_);
            const double u = unit(rng_);
            TrialLabel label = u < spec_.target_fraction ? TrialLabel::Target
                               : u < spec_.target_fraction + spec_.spoof_fraction ? TrialLabel::Spoof
                                                                                   : TrialLabel::NonTarget;
            std::size_t source = enroll;
            if (label == TrialLabel::NonTarget) {
                do {
                    source = pick_spk(rng_);
                } while (source == enroll || (spec_.xor_mode && pattern[source] == pattern[enroll]));
            }
            const std::string utt = name + "_utt" + std::to_string(t);
            asv.insert(utt, asv_vector(means[source]));
            std::vector<float> c(spec_.cm_dim);
            for (std::size_t j = 0; j < spec_.cm_dim; ++j) {
                double v = spec_.noise * normal_(rng_);
                if (label == TrialLabel::Spoof && j < spec_.spoof_dims) v += spec_.spoof_offset;
                c[j] = static_cast<float>(v);
            }
            cm.insert(utt, std::move(c));
            trials.add({speaker_id(name, enroll), utt, label});
        }
        return trials;
    }

private:
    static std::string speaker_id(const std::string& part, std::size_t s) { return part + "_spk" + std::to_string(s); }

    std::vector<float> asv_vector(const std::vector<double>& mean) {
        std::vector<float> v(mean.size());
        for (std::size_t j = 0; j < mean.size(); ++j) v[j] = static_cast<float>(mean[j] + spec_.noise * normal_(rng_));
        return v;
    }

    const SyntheticSpec& spec_;
    SyntheticData& out_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_;
};

}  // namespace detail

inline SyntheticData gen_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    SyntheticData data;
    data.stores.emplace("asv", EmbeddingStore("asv", static_cast<std::uint32_t>(spec.asv_dim)));
    data.stores.emplace("cm", EmbeddingStore("cm", static_cast<std::uint32_t>(spec.cm_dim)));
    detail::SyntheticBuilder builder(spec, data);
    data.train = builder.partition("train", spec.train_speakers, spec.train_trials);
    data.dev = builder.partition("dev", spec.dev_speakers, spec.dev_trials);
    data.eval = builder.partition("eval", spec.eval_speakers, spec.eval_trials);
    data.feature_spec = FeatureSpec({{"asv", KeyRole::Enroll, spec.asv_dim},
                                     {"asv", KeyRole::Test, spec.asv_dim},
                                     {"cm", KeyRole::Test, spec.cm_dim}});
    return data;
}

/// Single-system scores over synthetic stores: "asv" is the enrollment/test
/// cosine, "cm" is minus the mean of the spoof-offset CM dimensions (higher =
/// more bonafide).
inline ScoreSet subsystem_scores(const SyntheticData& data, const TrialList& trials, std::string_view system,
                                 std::size_t spoof_dims) {
    ScoreSet out;
    const auto& asv = data.stores.at("asv");
    const auto& cm = data.stores.at("cm");
    for (const auto& t : trials) {
        double s = 0.0;
        if (system == "asv") {
            auto a = asv.get(t.enroll_id);
            auto b = asv.get(t.test_id);
            std::vector<double> da(a.begin(), a.end()), db(b.begin(), b.end());
            s = cosine(da, db);
        } else if (system == "cm") {
            auto c = cm.get(t.test_id);
            for (std::size_t j = 0; j < spoof_dims; ++j) s -= c[j];
            s /= static_cast<double>(std::max<std::size_t>(1, spoof_dims));
        } else {
            throw ConfigError("pipeline", "unknown synthetic subsystem '" + std::string(system) + "'");
        }
        out.push_back({t, s});
    }
    return out;
}

}  // namespace sasvfuse
