#pragma once

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sasvfuse/detail/parallel.hpp"
#include "sasvfuse/pipeline.hpp"
#include "sasvfuse/synthetic.hpp"
#include "sasvfuse/vad.hpp"

namespace sasvfuse {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

namespace cli {

inline std::string percent(const std::optional<double>& v) {
    if (!v) return "-";
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * *v;
    return s.str();
}

/// Rows of (name, report), laid out as SV/SPF/SASV EER in percent.
inline void print_table(std::ostream& out, const std::vector<std::pair<std::string, EerReport>>& rows) {
    std::size_t w = 9;
    for (const auto& [name, _] : rows) w = std::max(w, name.size() + 2);
    out << std::left << std::setw(static_cast<int>(w)) << "partition" << std::right << std::setw(10) << "SV-EER%"
        << std::setw(10) << "SPF-EER%" << std::setw(11) << "SASV-EER%" << '\n';
    for (const auto& [name, r] : rows) {
        out << std::left << std::setw(static_cast<int>(w)) << name << std::right << std::setw(10) << percent(r.sv_eer)
            << std::setw(10) << percent(r.spf_eer) << std::setw(11) << percent(r.sasv_eer) << '\n';
    }
}

inline std::string backend_defaults_text() {
    std::string s = "Backend defaults (JSON \"backend\" object; any key may be overridden):\n";
    for (auto kind : kAllBackends) {
        const TrainConfig c = default_config(kind);
        s += "  " + std::string(to_string(kind)) + ":";
        switch (kind) {
            case BackendKind::Mlp:
                s += " layer_sizes=256,128,64 negative_slope=" + format_score(c.negative_slope) + " learning_rate=" +
                     format_score(c.learning_rate) + " momentum=" + format_score(c.momentum) + " batch_size=" +
                     std::to_string(c.batch_size) + " epochs=" + std::to_string(c.epochs);
                break;
            case BackendKind::LogReg:
                s += " reg_lambda=1/25380 max_iterations=" + std::to_string(c.max_iterations);
                break;
            case BackendKind::SvmLinear:
            case BackendKind::SvmRbf:
                s += " reg_lambda=1/25380 max_iterations=" + std::to_string(c.max_iterations) + " gamma=scale";
                break;
            case BackendKind::SvmPoly:
                s += " reg_lambda=1/25380 max_iterations=" + std::to_string(c.max_iterations) + " degree=" +
                     std::to_string(c.degree) + " coef0=0 gamma=scale";
                break;
            case BackendKind::RffLogReg:
                s += " pca_dim=" + std::to_string(c.pca_dim) + " rff_dim=" + std::to_string(c.rff_dim) +
                     " gamma=scale reg_lambda=1/25380";
                break;
            case BackendKind::Gmm:
                s += " n_components=" + std::to_string(c.n_components) + " max_iterations=" +
                     std::to_string(c.max_iterations) + " em_tol=" + format_score(c.em_tol) + " cov_floor=" +
                     format_score(c.cov_floor);
                break;
            case BackendKind::RandomForest:
                s += " n_trees=" + std::to_string(c.n_trees) + " max_features=sqrt(d) min_leaf=" + std::to_string(c.min_leaf);
                break;
            case BackendKind::Gbdt:
                s += " n_trees=" + std::to_string(c.n_trees) + " depth=" + std::to_string(c.depth) + " learning_rate=" +
                     format_score(c.learning_rate) + " l2_leaf_reg=" + format_score(c.l2_leaf_reg) + " random_strength=" +
                     format_score(c.random_strength) + " border_count=" +
                     std::to_string(c.border_count);
                break;
        }
        s += "\n";
    }
    s += "Score fusion reference setting: {\"kind\": \"logreg\", \"regularization_c\": 10000, \"max_iterations\": 0}\n";
    return s;
}

/// Finds "--config X" / "--config=X" after the subcommand token.
inline std::optional<std::string> find_config_arg(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
    }
    return std::nullopt;
}

inline bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
    for (const auto& a : args) {
        if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
}

/// For commands whose --config is a flat JSON object of flag values: appends
/// "--key value" for every key not already given on the command line.
inline void merge_flag_config(std::vector<std::string>& args, const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_text_file(path, "cli"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cli", path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("cli", path + ": expected a JSON object of flag values");
    for (const auto& [key, v] : j.items()) {
        const std::string flag = "--" + key;
        if (has_flag(args, flag)) continue;
        if (v.is_boolean()) {
            if (v.get<bool>()) args.push_back(flag);
        } else if (v.is_string()) {
            args.push_back(flag);
            args.push_back(v.get<std::string>());
        } else if (v.is_number() || v.is_null()) {
            args.push_back(flag);
            args.push_back(v.dump());
        } else {
            throw ConfigError("cli", path + ": value of '" + key + "' must be a scalar");
        }
    }
}

inline void apply_threads(const std::optional<unsigned>& threads) {
    if (threads) {
        set_max_threads(*threads);
        return;
    }
    if (const char* env = std::getenv("SASV_FUSE_THREADS")) {
        try {
            set_max_threads(static_cast<unsigned>(std::stoul(env)));
        } catch (const std::exception&) {
            throw ConfigError("cli", std::string("SASV_FUSE_THREADS is not a number: '") + env + "'");
        }
    }
}

inline nlohmann::json load_json_file(const fs::path& path) {
    try {
        return nlohmann::json::parse(detail::read_text_file(path, "cli"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cli", path.string() + ": " + e.what());
    }
}

struct CommonOptions {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::optional<unsigned> threads;
};

inline void add_common(CLI::App* cmd, CommonOptions& o, bool config_required, const std::string& config_help) {
    cmd->add_option("--seed", o.seed, "Random seed (overrides the config value; default 0)");
    auto* c = cmd->add_option("--config", o.config, config_help);
    if (config_required) c->required();
    cmd->add_option("--threads", o.threads, "Worker thread cap (default: SASV_FUSE_THREADS, else all cores)")
        ->check(CLI::PositiveNumber);
}

}  // namespace cli

/// Entry point. All output goes to out/err so the function is testable.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args(argv + 1, argv + argc);

    CLI::App app{"Fusion back-ends for spoofing-aware speaker verification", "sasv-fuse"};
    app.require_subcommand(1);
    app.fallthrough(false);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    cli::CommonOptions common;
    std::string output_dir;
    std::string backend_kind;
    std::string pooling = "pooled";

    // train-fusion
    auto* train = app.add_subcommand("train-fusion", "Embedding-level fusion: assemble, train, score dev/eval");
    cli::add_common(train, common, true, "Pipeline config JSON (stores, feature_spec, trials, backend)");
    train->add_option("--output-dir", output_dir, "Output directory (overrides the config)");
    train->add_option("--backend", backend_kind, "Backend kind override, keeps other backend keys")
        ->check(CLI::IsMember({"mlp", "logreg", "svm_linear", "svm_rbf", "svm_poly", "rff_logreg", "gmm", "random_forest", "gbdt"}));
    train->footer(cli::backend_defaults_text());

    // fuse-scores
    auto* fuse = app.add_subcommand("fuse-scores", "Score-level fusion of stacked subsystem scores");
    cli::add_common(fuse, common, true, "Score fusion config JSON (subsystems, backend)");
    fuse->add_option("--output-dir", output_dir, "Output directory (overrides the config)");
    fuse->add_option("--backend", backend_kind, "Backend kind override, keeps other backend keys")
        ->check(CLI::IsMember({"mlp", "logreg", "svm_linear", "svm_rbf", "svm_poly", "rff_logreg", "gmm", "random_forest", "gbdt"}));
    fuse->footer(cli::backend_defaults_text());

    // evaluate
    std::vector<std::string> score_files;
    std::string report_json;
    auto* evaluate = app.add_subcommand("evaluate", "SV/SPF/SASV EER of score files");
    cli::add_common(evaluate, common, false, "JSON object of flag values");
    evaluate->add_option("--scores", score_files, "Score file(s): enroll test label score")->required();
    evaluate->add_option("--pooling", pooling, "SASV negative pooling")
        ->check(CLI::IsMember({"pooled", "balanced"}))
        ->capture_default_str();
    evaluate->add_option("--json", report_json, "Also write the reports as JSON to this file");

    // gen-synth
    SyntheticSpec synth;
    bool linear_layout = false;
    auto* gen = app.add_subcommand("gen-synth", "Write a synthetic dataset with ready-to-run configs");
    cli::add_common(gen, common, false, "JSON object of flag values");
    gen->add_option("--output-dir", output_dir, "Output directory")->required();
    gen->add_option("--train-speakers", synth.train_speakers, "Speakers in train")->capture_default_str();
    gen->add_option("--dev-speakers", synth.dev_speakers, "Speakers in dev")->capture_default_str();
    gen->add_option("--eval-speakers", synth.eval_speakers, "Speakers in eval")->capture_default_str();
    gen->add_option("--train-trials", synth.train_trials, "Trials in train")->capture_default_str();
    gen->add_option("--dev-trials", synth.dev_trials, "Trials in dev")->capture_default_str();
    gen->add_option("--eval-trials", synth.eval_trials, "Trials in eval")->capture_default_str();
    gen->add_option("--target-fraction", synth.target_fraction, "Fraction of target trials")->capture_default_str();
    gen->add_option("--spoof-fraction", synth.spoof_fraction, "Fraction of spoof trials")->capture_default_str();
    gen->add_option("--asv-dim", synth.asv_dim, "ASV embedding dimension")->capture_default_str();
    gen->add_option("--cm-dim", synth.cm_dim, "CM embedding dimension")->capture_default_str();
    gen->add_option("--speaker-bits", synth.speaker_bits, "Bits of the speaker pattern (xor layout)")->capture_default_str();
    gen->add_option("--speaker-scale", synth.speaker_scale, "Speaker cluster offset")->capture_default_str();
    gen->add_option("--noise", synth.noise, "Per-utterance noise scale")->capture_default_str();
    gen->add_option("--spoof-offset", synth.spoof_offset, "CM offset carried by spoofed utterances")->capture_default_str();
    gen->add_option("--spoof-dims", synth.spoof_dims, "CM dimensions carrying the offset")->capture_default_str();
    gen->add_flag("--linear-layout", linear_layout, "Gaussian speaker means instead of the xor layout");

    // vad-trim
    std::string wav_in, wav_out, codec, bitrate = "64k", encode_cmd, decode_cmd;
    bool float_out = false;
    VadConfig vad;
    auto* trim = app.add_subcommand("vad-trim", "Magnitude-based silence trimming of a WAV file");
    cli::add_common(trim, common, false, "JSON object of flag values");
    trim->add_option("--in", wav_in, "Input WAV (PCM16 or float32)")->required();
    trim->add_option("--out", wav_out, "Output WAV")->required();
    trim->add_option("--frame-ms", vad.frame_ms, "Frame length in ms")->capture_default_str()->check(CLI::PositiveNumber);
    trim->add_option("--hop-ms", vad.hop_ms, "Hop in ms")->capture_default_str()->check(CLI::PositiveNumber);
    trim->add_option("--threshold-db", vad.threshold_db, "Frame RMS threshold in dBFS")->capture_default_str();
    trim->add_option("--min-active-frames", vad.min_active_frames, "Fewer active frames count as all silent")
        ->capture_default_str();
    trim->add_option("--codec", codec, "Codec round trip before trimming")->check(CLI::IsMember({"mp3", "aac"}));
    trim->add_option("--bitrate", bitrate, "Codec bitrate")->capture_default_str();
    trim->add_option("--encode-cmd", encode_cmd, "Encoder template with {in} {out} {bitrate} (default: ffmpeg)");
    trim->add_option("--decode-cmd", decode_cmd, "Decoder template with {in} {out} (default: ffmpeg)");
    trim->add_flag("--float", float_out, "Write float32 instead of PCM16");

    // inspect-store
    std::string store_path;
    bool list_ids = false;
    auto* inspect = app.add_subcommand("inspect-store", "Summarize an EMB1 embedding store");
    cli::add_common(inspect, common, false, "JSON object of flag values");
    inspect->add_option("--store", store_path, "Store file")->required();
    inspect->add_flag("--list", list_ids, "Print every identifier");

    try {
        if (!args.empty()) {
            const std::string& sub = args.front();
            const bool flat_config = sub == "evaluate" || sub == "gen-synth" || sub == "vad-trim" || sub == "inspect-store";
            if (flat_config) {
                if (auto cfg = cli::find_config_arg(args)) cli::merge_flag_config(args, *cfg);
            }
        }
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        try {
            app.parse(reversed);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? kExitOk : kExitUsage;
        }
        cli::apply_threads(common.threads);

        if (train->parsed() || fuse->parsed()) {
            const fs::path cfg_path(common.config);
            nlohmann::json j = cli::load_json_file(cfg_path);
            if (!backend_kind.empty() && j.contains("backend")) j["backend"]["kind"] = backend_kind;
            if (common.seed) {
                j["seed"] = *common.seed;
                if (j.contains("backend")) j["backend"]["seed"] = *common.seed;
            }
            if (!output_dir.empty()) j["output_dir"] = fs::absolute(output_dir).string();
            const fs::path base = cfg_path.parent_path();
            FusionResult r = train->parsed() ? run_embedding_fusion(pipeline_config_from_json(j, base))
                                             : run_score_fusion(score_fusion_config_from_json(j, base));
            cli::print_table(out, {{"dev", r.dev}, {"eval", r.eval}});
            if (j.contains("output_dir")) {
                out << "outputs written to " << detail::resolve(base, j["output_dir"].get<std::string>()).string() << '\n';
            }
        } else if (evaluate->parsed()) {
            const auto pool = pooling == "balanced" ? NegativePooling::Balanced : NegativePooling::Pooled;
            std::vector<std::pair<std::string, EerReport>> rows;
            nlohmann::json reports = nlohmann::json::object();
            // rows are named by file stem, qualified by the parent directory when stems repeat
            std::map<std::string, int> stems;
            for (const auto& f : score_files) ++stems[fs::path(f).stem().string()];
            for (const auto& f : score_files) {
                const ScoreSet scores = load_scores(f);
                EerReport r = sasv_metrics(scores, available_metrics(scores), pool);
                const fs::path p(f);
                std::string name = p.stem().string();
                if (stems[name] > 1) name = (p.parent_path().filename() / p.stem()).generic_string();
                rows.emplace_back(name, r);
                reports[name] = to_json(r);
            }
            cli::print_table(out, rows);
            if (!report_json.empty()) detail::write_file(report_json, reports.dump(2) + "\n", "cli");
        } else if (gen->parsed()) {
            synth.xor_mode = !linear_layout;
            if (common.seed) synth.seed = *common.seed;
            const SyntheticData data = gen_synthetic(synth);
            write_synthetic(data, synth, output_dir);
            out << "wrote " << data.train.size() << "/" << data.dev.size() << "/" << data.eval.size()
                << " train/dev/eval trials to " << output_dir << '\n';
        } else if (trim->parsed()) {
            fs::path source = wav_in;
            nlohmann::json manifest;
            manifest["input"] = wav_in;
            if (!codec.empty()) {
                CodecCommand cmd = default_codec_commands().at(codec);
                if (!encode_cmd.empty()) cmd.encode = encode_cmd;
                if (!decode_cmd.empty()) cmd.decode = decode_cmd;
                fs::path decoded = wav_out;
                decoded += ".codec.wav";
                const CodecRun run = augment_codec(wav_in, cmd, bitrate, decoded);
                manifest["codec"] = codec;
                manifest["bitrate"] = bitrate;
                manifest["commands"] = run.commands;
                source = decoded;
            }
            const Waveform w = load_wav(source);
            if (!codec.empty()) {
                std::error_code ec;
                fs::remove(source, ec);
            }
            const TrimResult t = trim_silence(w, vad);
            if (t.all_silent) {
                err << "vad: " << wav_in << " is all silent; no output written\n";
                return kExitData;
            }
            save_wav(wav_out, t.waveform, float_out ? WavEncoding::Float32 : WavEncoding::Pcm16);
            manifest["output"] = wav_out;
            manifest["vad"] = {{"frame_ms", vad.frame_ms}, {"hop_ms", vad.hop_ms}, {"threshold_db", vad.threshold_db},
                               {"min_active_frames", vad.min_active_frames}};
            manifest["input_seconds"] = w.duration();
            manifest["output_seconds"] = t.waveform.duration();
            if (!codec.empty()) detail::write_file(wav_out + ".json", manifest.dump(2) + "\n", "cli");
            out << std::fixed << std::setprecision(3) << w.duration() << " s -> " << t.waveform.duration() << " s\n";
        } else if (inspect->parsed()) {
            const EmbeddingStore s = load_store(store_path);
            out << "name: " << s.source_name() << "\ndim: " << s.dim() << "\ncount: " << s.size() << '\n';
            if (list_ids) {
                std::vector<std::string> ids;
                for (const auto& e : s.entries()) ids.push_back(e.id);
                std::sort(ids.begin(), ids.end());
                for (const auto& id : ids) out << id << '\n';
            }
        }
        return kExitOk;
    } catch (const Error& e) {
        err << "error [" << e.module() << "]: " << e.what() << '\n';
        return e.category() == ErrorCategory::Numerical ? kExitNumerical : kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "error [io]: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

}  // namespace sasvfuse
