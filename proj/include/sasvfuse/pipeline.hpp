#pragma once

#include <charconv>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sasvfuse/backends/model.hpp"
#include "sasvfuse/detail/file_io.hpp"
#include "sasvfuse/detail/hash.hpp"
#include "sasvfuse/embstore.hpp"
#include "sasvfuse/features.hpp"
#include "sasvfuse/metrics.hpp"
#include "sasvfuse/protocol.hpp"
#include "sasvfuse/synthetic.hpp"

namespace sasvfuse {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Score files: "enroll_id test_id label score", one trial per line.

inline std::string format_score(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string write_scores(const ScoreSet& scores) {
    std::string out;
    for (const auto& s : scores) {
        out += s.trial.enroll_id;
        out += ' ';
        out += s.trial.test_id;
        out += ' ';
        out += to_string(s.trial.label);
        out += ' ';
        out += format_score(s.score);
        out += '\n';
    }
    return out;
}

inline ScoreSet parse_scores(std::string_view text) {
    ScoreSet out;
    detail::for_each_data_line(text, [&](std::size_t line_no, std::string_view line) {
        auto f = detail::split_ws(line);
        if (f.size() != 4) {
            throw ParseError("pipeline", "malformed score line " + std::to_string(line_no) + ": expected 4 fields, got " +
                                             std::to_string(f.size()), line_no);
        }
        auto label = parse_label(f[2]);
        if (!label) {
            throw ParseError("pipeline", "unknown label '" + std::string(f[2]) + "' at line " + std::to_string(line_no), line_no);
        }
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), v);
        if (ec != std::errc() || ptr != f[3].data() + f[3].size() || !std::isfinite(v)) {
            throw ParseError("pipeline", "bad score '" + std::string(f[3]) + "' at line " + std::to_string(line_no), line_no);
        }
        out.push_back({TrialRecord{std::string(f[0]), std::string(f[1]), *label}, v});
    });
    return out;
}

inline ScoreSet load_scores(const fs::path& path) {
    try {
        return parse_scores(detail::read_text_file(path, "pipeline"));
    } catch (const ParseError& e) {
        throw ParseError("pipeline", path.string() + ": " + e.what(), e.line());
    }
}

inline TrialList load_trials(const fs::path& path) {
    try {
        return parse_trials(detail::read_text_file(path, "protocol"));
    } catch (const ParseError& e) {
        throw ParseError("protocol", path.string() + ": " + e.what(), e.line());
    }
}

// ---------------------------------------------------------------------------
// Configuration

inline PositiveRule positive_rule_from_json(const nlohmann::json& j) {
    PositiveRule rule{{false, false, false}};
    for (const auto& tok : j) {
        auto label = parse_label(tok.get<std::string>());
        if (!label) throw ConfigError("pipeline", "unknown label in positive_rule: " + tok.dump());
        rule.positive[static_cast<std::size_t>(*label)] = true;
    }
    return rule;
}

inline nlohmann::json to_json(const PositiveRule& rule) {
    nlohmann::json j = nlohmann::json::array();
    for (auto l : kAllLabels) {
        if (rule(l)) j.push_back(std::string(to_string(l)));
    }
    return j;
}

struct PipelineConfig {
    FeatureSpec feature_spec;
    TrainConfig backend;
    std::map<std::string, fs::path> stores;
    fs::path train_trials, dev_trials, eval_trials;
    PositiveRule positive_rule;
    NegativePooling pooling = NegativePooling::Pooled;
    std::uint64_t seed = 0;
    fs::path output_dir;  ///< empty: nothing written
};

struct SubsystemScores {
    std::string name;
    fs::path train, dev, eval;
};

struct ScoreFusionConfig {
    std::vector<SubsystemScores> subsystems;
    TrainConfig backend;
    PositiveRule positive_rule;
    NegativePooling pooling = NegativePooling::Pooled;
    std::uint64_t seed = 0;
    fs::path output_dir;
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known, const char* where) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("pipeline", std::string("unknown key '") + key + "' in " + where);
    }
}

inline TrainConfig backend_from_json(const nlohmann::json& j, std::uint64_t seed) {
    TrainConfig c = train_config_from_json(j);
    if (!j.contains("seed")) c.seed = seed;
    return c;
}

inline NegativePooling pooling_from_json(const nlohmann::json& j) {
    if (!j.contains("sasv_pooling")) return NegativePooling::Pooled;
    const auto s = j.at("sasv_pooling").get<std::string>();
    if (s == "pooled") return NegativePooling::Pooled;
    if (s == "balanced") return NegativePooling::Balanced;
    throw ConfigError("pipeline", "sasv_pooling must be \"pooled\" or \"balanced\"");
}

}  // namespace detail

/// Relative paths resolve against base_dir (normally the config file's directory).
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    try {
        detail::reject_unknown(j, {"seed", "stores", "feature_spec", "train_trials", "dev_trials", "eval_trials",
                                   "backend", "positive_rule", "sasv_pooling", "output_dir"},
                               "pipeline config");
        PipelineConfig c;
        c.seed = j.value("seed", std::uint64_t{0});
        for (const auto& [name, path] : j.at("stores").items()) c.stores[name] = detail::resolve(base_dir, path.get<std::string>());
        std::vector<FeaturePart> parts;
        for (const auto& p : j.at("feature_spec")) {
            detail::reject_unknown(p, {"store", "role", "dim"}, "feature_spec part");
            const auto role = p.at("role").get<std::string>();
            if (role != "enroll" && role != "test") throw ConfigError("pipeline", "role must be \"enroll\" or \"test\"");
            parts.push_back({p.at("store").get<std::string>(), role == "enroll" ? KeyRole::Enroll : KeyRole::Test,
                             p.at("dim").get<std::size_t>()});
        }
        c.feature_spec = FeatureSpec(std::move(parts));
        c.train_trials = detail::resolve(base_dir, j.at("train_trials").get<std::string>());
        c.dev_trials = detail::resolve(base_dir, j.at("dev_trials").get<std::string>());
        c.eval_trials = detail::resolve(base_dir, j.at("eval_trials").get<std::string>());
        c.backend = detail::backend_from_json(j.at("backend"), c.seed);
        if (j.contains("positive_rule")) c.positive_rule = positive_rule_from_json(j.at("positive_rule"));
        c.pooling = detail::pooling_from_json(j);
        if (j.contains("output_dir")) c.output_dir = detail::resolve(base_dir, j.at("output_dir").get<std::string>());
        for (const auto& part : c.feature_spec.parts()) {
            if (!c.stores.contains(part.store)) throw ConfigError("pipeline", "feature_spec names unknown store '" + part.store + "'");
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("pipeline", std::string("bad pipeline config: ") + e.what());
    }
}

inline ScoreFusionConfig score_fusion_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    try {
        detail::reject_unknown(j, {"seed", "subsystems", "backend", "positive_rule", "sasv_pooling", "output_dir"},
                               "score fusion config");
        ScoreFusionConfig c;
        c.seed = j.value("seed", std::uint64_t{0});
        for (const auto& s : j.at("subsystems")) {
            detail::reject_unknown(s, {"name", "train", "dev", "eval"}, "subsystem");
            c.subsystems.push_back({s.at("name").get<std::string>(), detail::resolve(base_dir, s.at("train").get<std::string>()),
                                    detail::resolve(base_dir, s.at("dev").get<std::string>()),
                                    detail::resolve(base_dir, s.at("eval").get<std::string>())});
        }
        c.backend = detail::backend_from_json(j.at("backend"), c.seed);
        if (j.contains("positive_rule")) c.positive_rule = positive_rule_from_json(j.at("positive_rule"));
        c.pooling = detail::pooling_from_json(j);
        if (j.contains("output_dir")) c.output_dir = detail::resolve(base_dir, j.at("output_dir").get<std::string>());
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("pipeline", std::string("bad score fusion config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Runs

struct FusionResult {
    FusionModel model;
    EerReport dev;
    EerReport eval;
    ScoreSet dev_scores;
    ScoreSet eval_scores;
    std::set<std::string> train_identifiers;  ///< every id that entered the training matrix
};

namespace detail {

inline ScoreSet score_trials(const FusionModel& model, const Matrix& X, const std::vector<TrialRecord>& trials) {
    const auto s = model.score_rows(X);
    ScoreSet out(trials.size());
    for (std::size_t i = 0; i < trials.size(); ++i) out[i] = {trials[i], s[i]};
    return out;
}

inline EerReport report_for(const ScoreSet& scores, NegativePooling pooling) {
    return sasv_metrics(scores, available_metrics(scores), pooling);
}

/// Writes outputs into dir; on any failure removes the files it created.
class OutputWriter {
public:
    explicit OutputWriter(fs::path dir) : dir_(std::move(dir)) {}
    OutputWriter(const OutputWriter&) = delete;
    OutputWriter& operator=(const OutputWriter&) = delete;
    ~OutputWriter() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& f : written_) fs::remove(f, ec);
    }

    void write(const std::string& name, std::span<const std::uint8_t> bytes) {
        fs::create_directories(dir_);
        const fs::path p = dir_ / name;
        detail::write_file(p, bytes, "pipeline");
        written_.push_back(p);
        hashes_[name] = sha256_hex(bytes);
    }
    void write(const std::string& name, std::string_view text) {
        write(name, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
    const std::map<std::string, std::string>& hashes() const { return hashes_; }
    void commit() { committed_ = true; }

private:
    fs::path dir_;
    std::vector<fs::path> written_;
    std::map<std::string, std::string> hashes_;
    bool committed_ = false;
};

inline void emit_outputs(const fs::path& dir, const FusionResult& r, const nlohmann::json& config_echo,
                         std::uint64_t seed) {
    OutputWriter out(dir);
    out.write("model.fmd", write_model(r.model));
    out.write("dev.scores", write_scores(r.dev_scores));
    out.write("eval.scores", write_scores(r.eval_scores));
    std::string ids;
    for (const auto& id : r.train_identifiers) ids += id + "\n";
    out.write("train_ids.txt", ids);
    nlohmann::json report;
    report["seed"] = seed;
    report["backend"] = to_json(r.model.config());
    report["dev"] = to_json(r.dev);
    report["eval"] = to_json(r.eval);
    out.write("report.json", report.dump(2) + "\n");
    nlohmann::json manifest;
    manifest["seed"] = seed;
    manifest["config"] = config_echo;
    manifest["artifacts"] = out.hashes();
    out.write("manifest.json", manifest.dump(2) + "\n");
    out.commit();
}

}  // namespace detail

inline nlohmann::json to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    for (const auto& [n, p] : c.stores) j["stores"][n] = p.generic_string();
    for (const auto& part : c.feature_spec.parts()) {
        j["feature_spec"].push_back({{"store", part.store}, {"role", std::string(to_string(part.role))}, {"dim", part.expected_dim}});
    }
    j["train_trials"] = c.train_trials.generic_string();
    j["dev_trials"] = c.dev_trials.generic_string();
    j["eval_trials"] = c.eval_trials.generic_string();
    j["backend"] = to_json(c.backend);
    j["positive_rule"] = to_json(c.positive_rule);
    j["sasv_pooling"] = c.pooling == NegativePooling::Pooled ? "pooled" : "balanced";
    return j;
}

inline nlohmann::json to_json(const ScoreFusionConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    for (const auto& s : c.subsystems) {
        j["subsystems"].push_back({{"name", s.name}, {"train", s.train.generic_string()}, {"dev", s.dev.generic_string()},
                                   {"eval", s.eval.generic_string()}});
    }
    j["backend"] = to_json(c.backend);
    j["positive_rule"] = to_json(c.positive_rule);
    j["sasv_pooling"] = c.pooling == NegativePooling::Pooled ? "pooled" : "balanced";
    return j;
}

/// Embedding fusion over in-memory stores and trial lists.
inline FusionResult run_embedding_fusion(const StoreMap& stores, const FeatureSpec& spec, const TrialList& train,
                                         const TrialList& dev, const TrialList& eval, const TrainConfig& backend,
                                         PositiveRule rule = {}, NegativePooling pooling = NegativePooling::Pooled) {
    const LabeledMatrix train_data = assemble_dataset(train, stores, spec, rule);
    const LabeledMatrix dev_data = assemble_dataset(dev, stores, spec, rule);
    const LabeledMatrix eval_data = assemble_dataset(eval, stores, spec, rule);
    std::set<std::string> ids;
    for (const auto& t : train_data.trials) {
        for (const auto& part : spec.parts()) ids.insert(part.role == KeyRole::Enroll ? t.enroll_id : t.test_id);
    }
    FusionModel model = train_model(train_data, backend);
    ScoreSet dev_scores = detail::score_trials(model, dev_data.rows, dev_data.trials);
    ScoreSet eval_scores = detail::score_trials(model, eval_data.rows, eval_data.trials);
    EerReport dev_report = detail::report_for(dev_scores, pooling);
    EerReport eval_report = detail::report_for(eval_scores, pooling);
    return FusionResult{std::move(model), dev_report, eval_report, std::move(dev_scores), std::move(eval_scores),
                        std::move(ids)};
}

inline FusionResult run_embedding_fusion(const PipelineConfig& cfg) {
    StoreMap stores;
    for (const auto& [name, path] : cfg.stores) stores.emplace(name, load_store(path));
    const TrialList train = load_trials(cfg.train_trials);
    const TrialList dev = load_trials(cfg.dev_trials);
    const TrialList eval = load_trials(cfg.eval_trials);
    FusionResult r = run_embedding_fusion(stores, cfg.feature_spec, train, dev, eval, cfg.backend, cfg.positive_rule,
                                          cfg.pooling);
    if (!cfg.output_dir.empty()) detail::emit_outputs(cfg.output_dir, r, to_json(cfg), cfg.seed);
    return r;
}

namespace detail {

inline std::string trial_key(const TrialRecord& t) { return t.enroll_id + " " + t.test_id; }

/// Stacks one column per subsystem in the trial order of the first one.
inline LabeledMatrix stack_scores(const std::vector<ScoreSet>& systems, const std::vector<std::string>& names,
                                  const PositiveRule& rule, const std::string& partition) {
    const ScoreSet& first = systems.front();
    std::vector<std::map<std::string, const ScoredTrial*>> index(systems.size());
    for (std::size_t s = 0; s < systems.size(); ++s) {
        for (const auto& e : systems[s]) {
            auto [it, inserted] = index[s].emplace(trial_key(e.trial), &e);
            if (!inserted) {
                throw AssemblyError("pipeline", partition + ": subsystem '" + names[s] + "' repeats trial '" +
                                                    trial_key(e.trial) + "'");
            }
        }
    }
    for (std::size_t s = 1; s < systems.size(); ++s) {
        std::vector<std::string> diff;
        for (const auto& [k, _] : index[0]) if (!index[s].contains(k)) diff.push_back(k);
        for (const auto& [k, _] : index[s]) if (!index[0].contains(k)) diff.push_back(k);
        if (!diff.empty()) {
            std::string msg = partition + ": trial sets of '" + names[0] + "' and '" + names[s] + "' differ in " +
                              std::to_string(diff.size()) + " trials:";
            for (std::size_t k = 0; k < std::min<std::size_t>(10, diff.size()); ++k) msg += " [" + diff[k] + "]";
            throw AssemblyError("pipeline", msg);
        }
    }
    LabeledMatrix m;
    m.rows.resize(static_cast<Eigen::Index>(first.size()), static_cast<Eigen::Index>(systems.size()));
    for (std::size_t i = 0; i < first.size(); ++i) {
        const auto key = trial_key(first[i].trial);
        for (std::size_t s = 0; s < systems.size(); ++s) {
            const ScoredTrial* e = index[s].at(key);
            if (e->trial.label != first[i].trial.label) {
                throw AssemblyError("pipeline", partition + ": label of trial '" + key + "' disagrees between '" +
                                                    names[0] + "' and '" + names[s] + "'");
            }
            m.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = e->score;
        }
        m.labels.push_back(rule(first[i].trial.label) ? 1 : 0);
        m.trials.push_back(first[i].trial);
    }
    return m;
}

}  // namespace detail

struct PartitionScores {
    std::vector<std::string> names;
    std::vector<ScoreSet> train, dev, eval;
};

inline FusionResult run_score_fusion(const PartitionScores& scores, const TrainConfig& backend, PositiveRule rule = {},
                                     NegativePooling pooling = NegativePooling::Pooled) {
    if (scores.names.size() < 2) throw ConfigError("pipeline", "score fusion needs at least 2 subsystems");
    const LabeledMatrix train = detail::stack_scores(scores.train, scores.names, rule, "train");
    const LabeledMatrix dev = detail::stack_scores(scores.dev, scores.names, rule, "dev");
    const LabeledMatrix eval = detail::stack_scores(scores.eval, scores.names, rule, "eval");
    std::set<std::string> ids;
    for (const auto& t : train.trials) {
        ids.insert(t.enroll_id);
        ids.insert(t.test_id);
    }
    FusionModel model = train_model(train, backend);
    ScoreSet dev_scores = detail::score_trials(model, dev.rows, dev.trials);
    ScoreSet eval_scores = detail::score_trials(model, eval.rows, eval.trials);
    EerReport dev_report = detail::report_for(dev_scores, pooling);
    EerReport eval_report = detail::report_for(eval_scores, pooling);
    return FusionResult{std::move(model), dev_report, eval_report, std::move(dev_scores), std::move(eval_scores),
                        std::move(ids)};
}

inline FusionResult run_score_fusion(const ScoreFusionConfig& cfg) {
    PartitionScores scores;
    for (const auto& s : cfg.subsystems) {
        scores.names.push_back(s.name);
        scores.train.push_back(load_scores(s.train));
        scores.dev.push_back(load_scores(s.dev));
        scores.eval.push_back(load_scores(s.eval));
    }
    FusionResult r = run_score_fusion(scores, cfg.backend, cfg.positive_rule, cfg.pooling);
    if (!cfg.output_dir.empty()) detail::emit_outputs(cfg.output_dir, r, to_json(cfg), cfg.seed);
    return r;
}

/// Writes a synthetic dataset as on-disk inputs: asv.emb, cm.emb,
/// {train,dev,eval}.trials, per-subsystem score files and two ready-to-run
/// configs (embedding_fusion.json, score_fusion.json) that reference them.
inline void write_synthetic(const SyntheticData& data, const SyntheticSpec& spec, const fs::path& dir) {
    detail::OutputWriter out(dir);
    for (const auto& [name, store] : data.stores) out.write(name + ".emb", write_store(store));
    const std::pair<const char*, const TrialList*> parts[] = {{"train", &data.train}, {"dev", &data.dev}, {"eval", &data.eval}};
    for (const auto& [part, list] : parts) {
        out.write(std::string(part) + ".trials", write_trials(*list));
        for (const char* sys : {"asv", "cm"}) {
            out.write(std::string(sys) + "_" + part + ".scores", write_scores(subsystem_scores(data, *list, sys, spec.spoof_dims)));
        }
    }
    nlohmann::json emb;
    emb["seed"] = spec.seed;
    for (const auto& [name, _] : data.stores) emb["stores"][name] = name + ".emb";
    for (const auto& part : data.feature_spec.parts()) {
        emb["feature_spec"].push_back({{"store", part.store}, {"role", std::string(to_string(part.role))}, {"dim", part.expected_dim}});
    }
    emb["train_trials"] = "train.trials";
    emb["dev_trials"] = "dev.trials";
    emb["eval_trials"] = "eval.trials";
    emb["backend"] = {{"kind", "gbdt"}};
    emb["output_dir"] = "out_embedding";
    out.write("embedding_fusion.json", emb.dump(2) + "\n");
    nlohmann::json sf;
    sf["seed"] = spec.seed;
    for (const char* sys : {"asv", "cm"}) {
        const std::string s(sys);
        sf["subsystems"].push_back({{"name", s}, {"train", s + "_train.scores"}, {"dev", s + "_dev.scores"}, {"eval", s + "_eval.scores"}});
    }
    sf["backend"] = {{"kind", "logreg"}, {"regularization_c", 10000}, {"max_iterations", 0}};
    sf["output_dir"] = "out_score";
    out.write("score_fusion.json", sf.dump(2) + "\n");
    out.commit();
}

}  // namespace sasvfuse
