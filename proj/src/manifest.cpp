#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lpiqa/labels.hpp"

namespace lpiqa {

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kFormatTag = "lpiqa-manifest";

Json array4(const std::array<double, 4>& v) { return Json::array({v[0], v[1], v[2], v[3]}); }

std::array<double, 4> read_array4(const Json& j, const char* key) {
    const Json& a = j.at(key);
    if (!a.is_array() || a.size() != 4) throw DataError(std::string("severity table: '") + key + "' needs 4 values");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>(), a[3].get<double>()};
}

Json table_to_json(const SeverityTable& t) {
    return Json{{"defocus_sigma", array4(t.defocus_sigma)},
                {"motion_length", array4(t.motion_length)},
                {"noise_variance", array4(t.noise_variance)},
                {"smoke_opacity", array4(t.smoke_opacity)},
                {"illumination_radius_fraction", array4(t.illumination_radius_fraction)},
                {"illumination_floor", array4(t.illumination_floor)}};
}

// Missing keys keep the values already in `t`.
void table_from_json(const Json& j, SeverityTable& t) {
    if (!j.is_object()) throw DataError("severity_table must be an object");
    const std::pair<const char*, std::array<double, 4>*> fields[] = {
        {"defocus_sigma", &t.defocus_sigma},
        {"motion_length", &t.motion_length},
        {"noise_variance", &t.noise_variance},
        {"smoke_opacity", &t.smoke_opacity},
        {"illumination_radius_fraction", &t.illumination_radius_fraction},
        {"illumination_floor", &t.illumination_floor}};
    for (const auto& [key, dst] : fields) {
        if (j.contains(key)) *dst = read_array4(j, key);
    }
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const auto& f : fields) known = known || key == f.first;
        if (!known) throw DataError("severity_table: unknown key '" + key + "'");
    }
    t.validate();
}

Json params_to_json(const DistortionParams& params) {
    return std::visit(
        [](const auto& p) -> Json {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, DefocusParams>) {
                return Json{{"sigma", p.sigma}};
            } else if constexpr (std::is_same_v<P, MotionParams>) {
                return Json{{"length", p.length}, {"angle", p.angle}};
            } else if constexpr (std::is_same_v<P, NoiseParams>) {
                return Json{{"variance", p.variance}};
            } else if constexpr (std::is_same_v<P, SmokeParams>) {
                return Json{{"opacity", p.opacity}, {"plate_seed", p.plate_seed}, {"plate_id", p.plate_id}};
            } else {
                return Json{{"center_x", p.center_x}, {"center_y", p.center_y}, {"radius", p.radius},
                            {"decay", p.decay},       {"floor", p.floor}};
            }
        },
        params);
}

DistortionParams params_from_json(DistortionType t, const Json& j) {
    switch (t) {
        case DistortionType::DefocusBlur: return DefocusParams{j.at("sigma").get<double>()};
        case DistortionType::MotionBlur: return MotionParams{j.at("length").get<double>(), j.at("angle").get<double>()};
        case DistortionType::WhiteNoise: return NoiseParams{j.at("variance").get<double>()};
        case DistortionType::Smoke:
            return SmokeParams{j.at("opacity").get<double>(), j.at("plate_seed").get<std::uint64_t>(),
                               j.value("plate_id", std::string())};
        case DistortionType::UnevenIllumination:
            return IlluminationParams{j.at("center_x").get<double>(), j.at("center_y").get<double>(),
                                      j.at("radius").get<double>(), j.at("decay").get<double>(),
                                      j.at("floor").get<double>()};
    }
    throw DataError("unreachable distortion type");
}

Json source_to_json(const ReferenceSource& s) {
    switch (s.kind) {
        case ReferenceSource::Kind::Phantom:
            return Json{{"kind", "phantom"}, {"width", s.width}, {"height", s.height}};
        case ReferenceSource::Kind::Directory: return Json{{"kind", "directory"}, {"directory", s.directory}};
        case ReferenceSource::Kind::None: break;
    }
    return Json{{"kind", "none"}};
}

ReferenceSource source_from_json(const Json& j) {
    ReferenceSource s;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "phantom") {
        s.kind = ReferenceSource::Kind::Phantom;
        s.width = j.at("width").get<int>();
        s.height = j.at("height").get<int>();
    } else if (kind == "directory") {
        s.kind = ReferenceSource::Kind::Directory;
        s.directory = j.at("directory").get<std::string>();
    } else if (kind != "none") {
        throw DataError("unknown reference source kind '" + kind + "'");
    }
    return s;
}

Json header_to_json(const Manifest& m) {
    return Json{{"format", kFormatTag},
                {"version", m.version},
                {"global_seed", m.global_seed},
                {"severity_table", table_to_json(m.table)},
                {"source", source_to_json(m.source)},
                {"record_count", m.records.size()}};
}

Json record_to_json(const ManifestRecord& r) {
    return Json{{"reference_id", r.reference_id},
                {"dtype", short_name(r.spec.dtype)},
                {"level", r.spec.level.rank()},
                {"class_id", r.class_id.id()},
                {"seed", r.spec.seed},
                {"params", params_to_json(r.spec.params)},
                {"split", split_name(r.split)},
                {"output_path", r.output_path}};
}

ManifestRecord record_from_json(const Json& j) {
    const DistortionType t = parse_distortion_type(j.at("dtype").get<std::string>());
    const SeverityLevel level(j.at("level").get<int>());
    const ClassLabel label(j.at("class_id").get<int>());
    if (label != encode_class(t, level)) {
        throw DataError("record class_id " + std::to_string(label.id()) + " does not match " +
                        std::string(short_name(t)) + std::to_string(level.rank()));
    }
    DistortionSpec spec{t, level, j.at("seed").get<std::uint64_t>(), params_from_json(t, j.at("params"))};
    return {j.at("reference_id").get<std::string>(), std::move(spec), label,
            parse_split(j.at("split").get<std::string>()), j.at("output_path").get<std::string>()};
}

}  // namespace

void write_manifest(const Manifest& m, std::ostream& out) {
    out << header_to_json(m).dump() << '\n';
    for (const auto& r : m.records) out << record_to_json(r).dump() << '\n';
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write manifest " + path.string());
    write_manifest(m, out);
    if (!out) throw DataError("failed writing manifest " + path.string());
}

std::string manifest_to_string(const Manifest& m) {
    std::ostringstream os;
    write_manifest(m, os);
    return os.str();
}

Manifest read_manifest(std::istream& in) {
    Manifest m;
    std::string line;
    std::size_t line_no = 0;
    std::size_t expected = 0;
    try {
        if (!std::getline(in, line)) throw DataError("manifest is empty");
        ++line_no;
        const Json header = Json::parse(line);
        if (header.value("format", std::string()) != kFormatTag) throw DataError("not an lpiqa manifest");
        m.version = header.at("version").get<int>();
        if (m.version != Manifest::kVersion) throw DataError("unsupported manifest version " + std::to_string(m.version));
        m.global_seed = header.at("global_seed").get<std::uint64_t>();
        table_from_json(header.at("severity_table"), m.table);
        m.source = source_from_json(header.at("source"));
        expected = header.value("record_count", std::size_t{0});
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            m.records.push_back(record_from_json(Json::parse(line)));
        }
    } catch (const Json::exception& e) {
        throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (m.records.size() != expected) {
        throw DataError("manifest truncated: header announces " + std::to_string(expected) + " records, found " +
                        std::to_string(m.records.size()));
    }
    return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open manifest " + path.string());
    return read_manifest(in);
}

GenerationConfig read_generation_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path.string());
    GenerationConfig cfg;
    try {
        const Json j = Json::parse(in);
        if (!j.is_object()) throw DataError("config must be a JSON object");
        if (j.contains("global_seed")) {
            cfg.global_seed = j.at("global_seed").get<std::uint64_t>();
            cfg.has_seed = true;
        }
        if (j.contains("severity_table")) table_from_json(j.at("severity_table"), cfg.table);
    } catch (const Json::exception& e) {
        throw DataError("config " + path.string() + ": " + e.what());
    }
    return cfg;
}

}  // namespace lpiqa
