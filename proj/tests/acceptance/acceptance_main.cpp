// Acceptance runner: one PASS/FAIL line per primary criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "../gradcheck.hpp"
#include "../oracles.hpp"
#include "lpiqa/cli.hpp"
#include "lpiqa/distort.hpp"
#include "lpiqa/eval.hpp"
#include "lpiqa/labels.hpp"
#include "lpiqa/train.hpp"

namespace fs = std::filesystem;
using namespace lpiqa;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

struct Criterion {
    std::string key;
    std::string title;
    std::function<Outcome(const fs::path&)> run;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(prec);
    s << v;
    return s.str();
}

std::string sci(double v) {
    std::ostringstream s;
    s.setf(std::ios::scientific);
    s.precision(2);
    s << v;
    return s.str();
}

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (out_text) *out_text = out.str();
    if (code != 0) std::cerr << "  cli " << args.front() << " exited " << code << ": " << err.str();
    return code;
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Relative paths and contents of every regular file under `root`.
std::vector<std::pair<std::string, std::vector<unsigned char>>> snapshot(const fs::path& root) {
    std::vector<std::pair<std::string, std::vector<unsigned char>>> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).string(), read_bytes(e.path()));
    }
    std::sort(out.begin(), out.end());
    return out;
}

Outcome gradient_correctness(const fs::path&) {
    std::vector<std::pair<std::string, double>> elementwise = {
        {"relu", test::relu_gradcheck(5)},
        {"pool", test::pool_gradcheck(6)},
        {"fc", test::fc_gradcheck(9)},
        {"softmax_ce", test::softmax_gradcheck(11)},
    };
    std::vector<std::pair<std::string, double>> conv = {
        {"conv_s1p1", test::conv_gradcheck(1, 1, 10)},
        {"conv_s2p1", test::conv_gradcheck(2, 1, 20)},
        {"conv_s1p0", test::conv_gradcheck(1, 0, 30)},
        {"block_identity", test::block_gradcheck(false, 40)},
        {"block_projection", test::block_gradcheck(true, 50)},
    };
    nn::ModelConfig down = test::tiny_config();
    down.stem_channels = 4;
    down.stages = {{1, 4}, {1, 6}};
    std::vector<std::pair<std::string, double>> e2e = {
        {"model_tiny", test::end_to_end_gradcheck(test::tiny_config(), 60)},
        {"model_downsampling", test::end_to_end_gradcheck(down, 70)},
    };
    bool ok = true;
    std::string detail;
    auto check = [&](const auto& group, double bound) {
        for (const auto& [name, err] : group) {
            ok = ok && err < bound;
            detail += name + "=" + sci(err) + (err < bound ? "" : "(>" + sci(bound) + ")") + " ";
        }
    };
    check(elementwise, 1e-6);
    check(conv, 1e-4);
    check(e2e, 1e-3);
    return {ok, detail};
}

Outcome metric_oracles(const fs::path&) {
    auto pairs = [](std::vector<int> p, std::vector<int> t) {
        std::vector<RankPair> out;
        for (std::size_t i = 0; i < p.size(); ++i) out.emplace_back(p[i], t[i]);
        return out;
    };
    const auto sweep = test::srocc_oracle_sweep(1000, 2024);
    const auto plus = srocc(pairs({1, 2, 3, 4}, {1, 2, 3, 4}));
    const auto minus = srocc(pairs({4, 3, 2, 1}, {1, 2, 3, 4}));
    const auto swap = srocc(pairs({2, 1, 3, 4}, {1, 2, 3, 4}));
    const double acc = test::accuracy_trace_sweep(100, 77);
    const bool ok = sweep.instances == 1000 && sweep.degenerate_mismatches == 0 && sweep.worst_difference <= 1e-12 &&
                    plus && std::abs(*plus - 1.0) < 1e-15 && minus && std::abs(*minus + 1.0) < 1e-15 && swap &&
                    std::abs(*swap - 0.8) < 1e-12 && acc == 0.0;
    return {ok, "srocc_vs_oracle_max=" + sci(sweep.worst_difference) +
                    " degenerate_mismatches=" + std::to_string(sweep.degenerate_mismatches) +
                    " +1=" + (plus ? fmt(*plus, 12) : "none") + " -1=" + (minus ? fmt(*minus, 12) : "none") +
                    " swap=" + (swap ? fmt(*swap, 12) : "none") + " accuracy_vs_trace_max=" + sci(acc)};
}

Outcome codec_bijection(const fs::path&) {
    int round_trips = 0;
    std::vector<bool> seen(kNumClasses, false);
    for (DistortionType t : kAllDistortionTypes) {
        for (int lv = 1; lv <= kNumSeverityLevels; ++lv) {
            const ClassLabel c = encode_class(t, SeverityLevel(lv));
            const auto [dt, dl] = decode_class(c);
            if (dt == t && dl.rank() == lv && !seen[c.id()]) ++round_trips;
            seen[c.id()] = true;
        }
    }
    const int first = encode_class(DistortionType::DefocusBlur, SeverityLevel(1)).id();
    const int last = encode_class(DistortionType::UnevenIllumination, SeverityLevel(4)).id();
    const bool ok = round_trips == 20 && std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }) &&
                    first == 0 && last == 19;
    return {ok, "round_trips=" + std::to_string(round_trips) + "/20 (DB,1)->" + std::to_string(first) +
                    " (UI,4)->" + std::to_string(last)};
}

Outcome distortion_invariants(const fs::path&) {
    constexpr int kPhantoms = 50, kW = 256, kH = 144;
    const SeverityTable table;
    std::vector<ImageF32> refs;
    for (int i = 0; i < kPhantoms; ++i) refs.push_back(phantom_image(kW, kH, derive_seed(0, "acceptance-phantom", i)));

    std::array<std::array<double, 4>, kNumDistortionTypes> mean{};
    for (DistortionType t : kAllDistortionTypes) {
        for (int lv = 1; lv <= 4; ++lv) {
            double sum = 0;
            for (int i = 0; i < kPhantoms; ++i) {
                const std::uint64_t seed = derive_seed(1, "acceptance-spec", static_cast<std::uint64_t>(i) * 32 + type_index(t) * 4 + lv);
                const DistortionSpec spec = resolve_spec(t, SeverityLevel(lv), table, seed);
                sum += psnr(refs[i], apply(spec, refs[i]));
            }
            mean[type_index(t)][lv - 1] = sum / kPhantoms;
        }
    }
    bool ok = true;
    std::string detail;
    for (DistortionType t : kAllDistortionTypes) {
        const auto& m = mean[type_index(t)];
        double min_gap = 1e9;
        for (int k = 0; k < 3; ++k) min_gap = std::min(min_gap, m[k] - m[k + 1]);
        ok = ok && min_gap >= 0.5;
        detail += std::string(short_name(t)) + "=[" + fmt(m[0], 2) + "," + fmt(m[1], 2) + "," + fmt(m[2], 2) + "," +
                  fmt(m[3], 2) + "] gap>=" + fmt(min_gap, 2) + " ";
    }
    // Black plate: screen blend must return the base bit for bit at any opacity.
    const ImageF32 black(kW, kH, 0.0f);
    int exact = 0, trials = 0;
    for (int i = 0; i < 10; ++i) {
        for (double opacity : {0.0, 0.25, 0.5, 0.9, 1.0}) {
            ++trials;
            exact += screen_blend(refs[i], black, opacity) == refs[i];
        }
    }
    ok = ok && exact == trials;
    detail += "black_plate_exact=" + std::to_string(exact) + "/" + std::to_string(trials);
    return {ok, detail};
}

Outcome determinism(const fs::path& work) {
    const std::vector<std::string> gen{"generate", "--phantom", "10", "--per-class", "10", "--width", "64",
                                       "--height", "64", "--seed", "5"};
    auto with = [](std::vector<std::string> v, std::initializer_list<std::string> extra) {
        v.insert(v.end(), extra);
        return v;
    };
    const fs::path a = work / "gen_a", b = work / "gen_b";
    if (run_cli(with(gen, {"--out", a.string()})) || run_cli(with(gen, {"--out", b.string()})))
        return {false, "generate failed"};
    const auto sa = snapshot(a), sb = snapshot(b);
    const bool gen_same = sa == sb;

    const std::vector<std::string> trn{"train", "--manifest", (a / "manifest.jsonl").string(), "--input-size", "32",
                                       "--seed", "9"};
    if (run_cli(with(trn, {"--epochs", "2", "--out-dir", (work / "t1").string()})) ||
        run_cli(with(trn, {"--epochs", "2", "--out-dir", (work / "t2").string()})))
        return {false, "train failed"};
    const auto c1 = read_bytes(work / "t1" / "model_e0002.ckpt");
    const auto c2 = read_bytes(work / "t2" / "model_e0002.ckpt");
    const bool train_same = !c1.empty() && c1 == c2;

    if (run_cli(with(trn, {"--epochs", "1", "--out-dir", (work / "r").string()})) ||
        run_cli(with(trn, {"--epochs", "2", "--out-dir", (work / "r").string(), "--resume",
                           (work / "r" / "model_e0001.ckpt").string()})))
        return {false, "resume failed"};
    const auto cr = read_bytes(work / "r" / "model_e0002.ckpt");
    const bool resume_same = !cr.empty() && cr == c1;

    return {gen_same && train_same && resume_same,
            "generate_files=" + std::to_string(sa.size()) + (gen_same ? " identical" : " DIFFER") +
                " train_checkpoint=" + std::to_string(c1.size()) + "B" + (train_same ? " identical" : " DIFFER") +
                " resume_vs_straight=" + (resume_same ? "identical" : "DIFFER")};
}

Outcome overfit(const fs::path&) {
    Manifest m = build_manifest(phantom_reference_ids(1), 1, SeverityTable{}, 11);
    m.source = {ReferenceSource::Kind::Phantom, 32, 32, {}};
    for (auto& r : m.records) r.split = Split::Train;
    const LabeledImages data = LabeledImages::from_manifest(m, "/nonexistent", 32, Split::Train);

    TrainConfig config;
    config.model.input_size = 32;
    config.learning_rate = 1e-3;
    config.batch_size = 10;
    const int steps_per_epoch = static_cast<int>((data.size() + config.batch_size - 1) / config.batch_size);
    config.epochs = 500 / steps_per_epoch;
    config.seed = 1;
    const TrainResult r = train(config, data);
    int hit = -1;
    double best = 1e9;
    for (const auto& e : r.log) {
        best = std::min(best, e.loss);
        if (hit < 0 && e.loss < 0.05) hit = e.epoch;
    }
    if (hit < 0) return {false, "loss never below 0.05 in 500 steps (min epoch loss " + fmt(best) + ")"};
    return {true, "epoch_loss<0.05 at step " + std::to_string(hit * steps_per_epoch) + " (epoch " +
                      std::to_string(hit) + "), final loss " + fmt(r.log.back().loss, 5)};
}

/// Loss column of train_log.csv.
std::vector<double> read_losses(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    std::vector<double> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream s(line);
        std::string epoch, loss;
        std::getline(s, epoch, ',');
        std::getline(s, loss, ',');
        out.push_back(std::stod(loss));
    }
    return out;
}

Outcome desk_pipeline(const fs::path& work) {
    const fs::path corpus = work / "corpus", model = work / "model", report = work / "report";
    if (run_cli({"generate", "--phantom", "100", "--per-class", "100", "--width", "64", "--height", "64", "--seed",
                 "0", "--train-fraction", "0.8", "--out", corpus.string()}))
        return {false, "generate failed"};
    std::string log;
    if (run_cli({"train", "--manifest", (corpus / "manifest.jsonl").string(), "--out-dir", model.string()}, &log))
        return {false, "train failed"};
    std::cout << log << std::flush;
    if (run_cli({"evaluate", "--manifest", (corpus / "manifest.jsonl").string(), "--checkpoint",
                 (model / "model_e0030.ckpt").string(), "--out-dir", report.string()}))
        return {false, "evaluate failed"};
    std::ifstream in(report / "report.json");
    const auto j = nlohmann::json::parse(in);
    const double acc = j.at("accuracy").get<double>();
    const double type_acc = j.at("type_accuracy").get<double>();
    const bool degenerate = j.at("srocc_degenerate").get<bool>();
    const double rho = degenerate ? 0.0 : j.at("srocc_overall").get<double>();

    // Informational: is the 5-epoch moving average of the training loss monotone?
    const auto losses = read_losses(model / "train_log.csv");
    int rises = 0;
    for (std::size_t e = 5; e < losses.size(); ++e) {
        const double prev = std::accumulate(losses.begin() + (e - 5), losses.begin() + e, 0.0);
        const double cur = std::accumulate(losses.begin() + (e - 4), losses.begin() + e + 1, 0.0);
        rises += cur > prev;
    }
    const bool ok = acc >= 0.25 && type_acc >= 0.6 && !degenerate && rho >= 0.4;
    return {ok, "test_n=" + std::to_string(j.at("sample_count").get<long>()) + " accuracy=" + fmt(acc) +
                    " type_accuracy=" + fmt(type_acc) + " srocc=" + (degenerate ? "degenerate" : fmt(rho)) +
                    " loss " + (losses.empty() ? "?" : fmt(losses.front()) + "->" + fmt(losses.back())) +
                    " moving_avg_rises=" + std::to_string(rises)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lpiqa acceptance suite"};
    std::string work_dir = (fs::temp_directory_path() / "lpiqa_acceptance").string();
    std::vector<std::string> only;
    bool keep = false;
    app.add_option("--work-dir", work_dir, "Scratch directory (wiped on start)")->capture_default_str();
    app.add_option("--only", only, "Run only these criteria (gradients, metrics, codec, distortions, "
                                   "determinism, overfit, desk)");
    app.add_flag("--keep", keep, "Leave the scratch directory in place");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria = {
        {"gradients", "Gradient correctness", gradient_correctness},
        {"metrics", "Metric oracles", metric_oracles},
        {"codec", "Codec bijection", codec_bijection},
        {"distortions", "Distortion invariants", distortion_invariants},
        {"determinism", "Determinism", determinism},
        {"overfit", "Overfit sanity", overfit},
        {"desk", "Desk-scale pipeline", desk_pipeline},
    };

    const fs::path root(work_dir);
    fs::remove_all(root);
    int failures = 0, ran = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.key) == only.end()) continue;
        const fs::path dir = root / c.key;
        fs::create_directories(dir);
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run(dir);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.title << "  (" << fmt(secs, 1) << " s)  " << o.detail
                  << std::endl;
        failures += !o.pass;
        ++ran;
    }
    if (!keep) fs::remove_all(root);
    std::cout << (ran - failures) << "/" << ran << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
