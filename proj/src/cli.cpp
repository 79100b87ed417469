#include "lpiqa/cli.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lpiqa/eval.hpp"
#include "lpiqa/image_io.hpp"
#include "lpiqa/parallel.hpp"
#include "lpiqa/train.hpp"

namespace lpiqa::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GenerateArgs {
    std::string refs;
    int phantom = 0;
    std::string out;
    int per_class = 100;
    std::uint64_t seed = 0;
    std::string config;
    int width = 256;
    int height = 144;
    std::vector<std::string> smoke_plates;
    double train_fraction = 0.8;
};

struct TrainArgs {
    std::string manifest;
    std::string images;
    std::string out_dir;
    std::string config;
    std::string resume;
    bool fresh_optimizer = false;
    int epochs = 0;
    int batch_size = 0;
    double lr = 0;
    std::uint64_t seed = 0;
    int input_size = 0;
    int stem_channels = 0;
    std::string stages;
    int checkpoint_every = 0;
};

struct EvaluateArgs {
    std::string manifest;
    std::string images;
    std::string checkpoint;
    std::string out_dir;
};

struct PredictArgs {
    std::string checkpoint;
    std::string image;
    bool json = false;
};

void require_file(const std::string& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw DataError(what + " not found: " + path);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> list_references(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("reference directory not found: " + dir.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = lower(entry.path().extension().string());
        if (ext == ".png" || ext == ".ppm") ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

fs::path image_root_for(const std::string& images, const std::string& manifest) {
    if (!images.empty()) return images;
    const fs::path parent = fs::path(manifest).parent_path();
    return parent.empty() ? fs::path(".") : parent;
}

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
    if (a.refs.empty() == (a.phantom == 0)) throw UsageError("generate needs exactly one of --refs or --phantom");
    if (a.per_class < 1) throw UsageError("--per-class must be >= 1");
    if (!(a.train_fraction > 0.0 && a.train_fraction < 1.0)) throw UsageError("--train-fraction must lie in (0, 1)");
    if (a.width < 8 || a.height < 8) throw UsageError("--width and --height must be >= 8");

    GenerationConfig cfg;
    if (!a.config.empty()) cfg = read_generation_config(a.config);
    if (!cfg.has_seed) cfg.global_seed = a.seed;
    cfg.table.validate();

    Manifest manifest;
    std::vector<std::string> ids;
    ReferenceSource source;
    if (a.phantom > 0) {
        ids = phantom_reference_ids(a.phantom);
        source = {ReferenceSource::Kind::Phantom, a.width, a.height, {}};
    } else {
        ids = list_references(a.refs);
        source = {ReferenceSource::Kind::Directory, 0, 0, a.refs};
    }

    PlateLibrary plates;
    for (const auto& p : a.smoke_plates) {
        require_file(p, "smoke plate");
        plates.add(fs::path(p).filename().string(), load_image(p));
    }
    const PlateLibrary* plate_ptr = plates.empty() ? nullptr : &plates;

    manifest = build_manifest(ids, a.per_class, cfg.table, cfg.global_seed, plate_ptr);
    manifest.source = source;
    manifest = split_manifest(manifest, a.train_fraction, cfg.global_seed);

    // Group records by reference so each reference is decoded once.
    std::map<std::string, std::vector<std::size_t>> by_ref;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) by_ref[manifest.records[i].reference_id].push_back(i);
    std::vector<const std::vector<std::size_t>*> groups;
    for (const auto& [id, idx] : by_ref) groups.push_back(&idx);

    const fs::path out_dir(a.out);
    fs::create_directories(out_dir);
    for (const auto& r : manifest.records) fs::create_directories((out_dir / r.output_path).parent_path());

    parallel_for(groups.size(), [&](std::size_t g) {
        const auto& idx = *groups[g];
        const ImageF32 ref = load_reference(manifest, manifest.records[idx.front()]);
        for (std::size_t i : idx) {
            const ManifestRecord& r = manifest.records[i];
            save_image(apply(r.spec, ref, plate_ptr), out_dir / r.output_path);
        }
    });
    write_manifest(manifest, out_dir / "manifest.jsonl");

    out << "generated " << manifest.records.size() << " images (" << manifest.records_in(Split::Train).size()
        << " train, " << manifest.records_in(Split::Test).size() << " test) in " << out_dir.string() << '\n';
    return kOk;
}

/// Applies the optional "train" object of a config file.
void apply_train_section(const std::string& path, TrainConfig& c) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path);
    try {
        const Json j = Json::parse(in);
        if (j.contains("global_seed")) c.seed = j.at("global_seed").get<std::uint64_t>();
        if (!j.contains("train")) return;
        for (const auto& [key, v] : j.at("train").items()) {
            if (key == "epochs") c.epochs = v.get<int>();
            else if (key == "batch_size") c.batch_size = v.get<int>();
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "checkpoint_every") c.checkpoint_every = v.get<int>();
            else if (key == "input_size") c.model.input_size = v.get<int>();
            else if (key == "stem_channels") c.model.stem_channels = v.get<int>();
            else if (key == "stages") c.model.stages = nn::ModelConfig::parse_stages(v.get<std::string>());
            else throw DataError("config " + path + ": unknown train key '" + key + "'");
        }
    } catch (const Json::exception& e) {
        throw DataError("config " + path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError("config " + path + ": " + e.what());
    }
}

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
    TrainConfig config;
    if (!a.config.empty()) apply_train_section(a.config, config);
    auto given = [&](const char* name) { return sub.count(name) > 0; };

    // On resume the stored architecture is the base; explicit flags still override it.
    std::optional<nn::Checkpoint> start;
    if (!a.resume.empty()) {
        start = nn::load_checkpoint(a.resume);
        config.model = start->params.config;
    }
    if (given("--epochs")) config.epochs = a.epochs;
    if (given("--batch-size")) config.batch_size = a.batch_size;
    if (given("--lr")) config.learning_rate = a.lr;
    if (given("--seed")) config.seed = a.seed;
    if (given("--checkpoint-every")) config.checkpoint_every = a.checkpoint_every;
    try {
        if (given("--input-size")) config.model.input_size = a.input_size;
        if (given("--stem-channels")) config.model.stem_channels = a.stem_channels;
        if (given("--stages")) config.model.stages = nn::ModelConfig::parse_stages(a.stages);
        config.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    require_file(a.manifest, "manifest");
    const Manifest manifest = read_manifest(fs::path(a.manifest));
    if (manifest.records_in(Split::Train).empty()) throw DataError("manifest has no train records");
    const LabeledImages data = LabeledImages::from_manifest(manifest, image_root_for(a.images, a.manifest),
                                                             config.model.input_size, Split::Train);

    fs::create_directories(a.out_dir);
    TrainOutputs outputs;
    outputs.directory = a.out_dir;
    outputs.on_epoch = [&](const TrainLogEntry& e) {
        out << "epoch " << e.epoch << "/" << config.epochs << "  loss " << std::fixed << std::setprecision(4) << e.loss
            << "  train_acc " << e.train_accuracy << "  " << std::setprecision(1) << e.seconds << "s" << std::endl;
        out.unsetf(std::ios::floatfield);
    };
    out << "training " << config.model.fingerprint() << " on " << data.size() << " images" << std::endl;
    const TrainResult result = start ? resume(*start, config, data, outputs, a.fresh_optimizer)
                                     : train(config, data, outputs);
    if (!result.checkpoints.empty()) out << "checkpoint " << result.checkpoints.back().string() << '\n';
    return kOk;
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
    require_file(a.manifest, "manifest");
    require_file(a.checkpoint, "checkpoint");
    const auto model = load_classifier(a.checkpoint);
    const Manifest manifest = read_manifest(fs::path(a.manifest));
    const EvalReport report = evaluate(*model, manifest, image_root_for(a.images, a.manifest));

    // Only write once everything has succeeded.
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    write_text(dir / "report.txt", report_text(report));
    write_text(dir / "report.json", report_json(report));
    write_text(dir / "confusion.csv", confusion_csv(report.confusion));
    out << report_text(report);
    return kOk;
}

int cmd_predict(const PredictArgs& a, std::ostream& out) {
    require_file(a.checkpoint, "checkpoint");
    require_file(a.image, "image");
    const auto model = load_classifier(a.checkpoint);
    const Prediction p = predict(*model, load_image(a.image));
    const auto [dtype, level] = decode_class(p.label);
    if (a.json) {
        const Json j{{"class_id", p.label.id()},
                     {"class", class_name(p.label)},
                     {"distortion", std::string(long_name(dtype))},
                     {"type", std::string(short_name(dtype))},
                     {"level", level.rank()},
                     {"confidence", p.confidence()}};
        out << j.dump() << '\n';
    } else {
        out << long_name(dtype) << ", level " << level.rank() << " (confidence " << std::fixed
            << std::setprecision(4) << p.confidence() << ")\n";
        out.unsetf(std::ios::floatfield);
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Synthetic distortion corpora and severity classification for endoscopic frames", "lpiqa"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);

    GenerateArgs g;
    auto* gen = app.add_subcommand("generate", "Write a distorted corpus and its manifest");
    gen->add_option("--refs", g.refs, "Directory of reference frames (.png/.ppm)");
    gen->add_option("--phantom", g.phantom, "Use N procedural phantom frames as references")->check(CLI::PositiveNumber);
    gen->add_option("--out", g.out, "Output directory")->required();
    gen->add_option("--per-class", g.per_class, "Images per class")->capture_default_str();
    gen->add_option("--seed", g.seed, "Global seed")->capture_default_str();
    gen->add_option("--config", g.config, "JSON config with global_seed / severity_table");
    gen->add_option("--width", g.width, "Phantom width")->capture_default_str();
    gen->add_option("--height", g.height, "Phantom height")->capture_default_str();
    gen->add_option("--smoke-plate", g.smoke_plates, "Smoke plate image (repeatable)");
    gen->add_option("--train-fraction", g.train_fraction, "Share of references in train")->capture_default_str();

    TrainArgs t;
    auto* trn = app.add_subcommand("train", "Train the classifier on the train split");
    trn->add_option("--manifest", t.manifest, "Manifest file")->required();
    trn->add_option("--images", t.images, "Image root (default: manifest directory)");
    trn->add_option("--out-dir", t.out_dir, "Directory for checkpoints and train_log.csv")->required();
    trn->add_option("--config", t.config, "JSON config with an optional \"train\" object");
    trn->add_option("--resume", t.resume, "Continue from checkpoint");
    trn->add_flag("--fresh-optimizer", t.fresh_optimizer, "Allow resuming without stored Adam moments");
    trn->add_option("--epochs", t.epochs, "Total epochs");
    trn->add_option("--batch-size", t.batch_size, "Mini-batch size");
    trn->add_option("--lr", t.lr, "Adam learning rate");
    trn->add_option("--seed", t.seed, "Init and shuffle seed");
    trn->add_option("--input-size", t.input_size, "Square input side");
    trn->add_option("--stem-channels", t.stem_channels, "Stem width");
    trn->add_option("--stages", t.stages, "Stages as BLOCKSxCHANNELS list, e.g. 2x16,2x32,2x64");
    trn->add_option("--checkpoint-every", t.checkpoint_every, "Checkpoint cadence in epochs (0: final only)");

    EvaluateArgs e;
    auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on the test split");
    ev->add_option("--manifest", e.manifest, "Manifest file")->required();
    ev->add_option("--images", e.images, "Image root (default: manifest directory)");
    ev->add_option("--checkpoint", e.checkpoint, "Checkpoint or lookup table")->required();
    ev->add_option("--out-dir", e.out_dir, "Directory for report.txt, report.json, confusion.csv")->required();

    PredictArgs p;
    auto* pr = app.add_subcommand("predict", "Classify one image");
    pr->add_option("--checkpoint", p.checkpoint, "Checkpoint or lookup table")->required();
    pr->add_option("--image", p.image, "Image file")->required();
    pr->add_flag("--json", p.json, "Print JSON");

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (threads > 0) set_thread_count(threads);
        if (gen->parsed()) return cmd_generate(g, out);
        if (trn->parsed()) return cmd_train(t, *trn, out);
        if (ev->parsed()) return cmd_evaluate(e, out);
        if (pr->parsed()) return cmd_predict(p, out);
        return kUsage;
    } catch (const UsageError& ex) {
        err << "error: " << ex.what() << '\n';
        return kUsage;
    } catch (const DataError& ex) {
        err << "error: " << ex.what() << '\n';
        return kData;
    } catch (const fs::filesystem_error& ex) {
        err << "error: " << ex.what() << '\n';
        return kData;
    } catch (const std::exception& ex) {
        err << "internal error: " << ex.what() << '\n';
        return kInternal;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace lpiqa::cli
