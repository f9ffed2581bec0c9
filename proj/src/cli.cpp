// Copyright 2026 The netdissect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "netdissect/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "netdissect/activation_store.hpp"
#include "netdissect/checksum.hpp"
#include "netdissect/dataset_index.hpp"
#include "netdissect/dissection.hpp"
#include "netdissect/errors.hpp"
#include "netdissect/explain.hpp"
#include "netdissect/log.hpp"
#include "netdissect/parallel.hpp"
#include "netdissect/report.hpp"
#include "netdissect/rotation.hpp"
#include "netdissect/scoring.hpp"
#include "netdissect/thresholds.hpp"
#include "netdissect/upsample.hpp"

namespace netdissect::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Options {
    // shared
    int workers = 0;
    std::string out = "dissect_out";
    bool quiet = false;
    bool verbose = false;

    // inputs
    std::string store;
    std::string dataset;
    std::string color_table;
    int min_samples = 10;

    // thresholds and scoring
    double tau = kDefaultTau;
    std::vector<double> taus;
    std::string mode = "auto";
    double epsilon = kDefaultSketchEpsilon;
    std::uint64_t seed = 0;
    std::string thresholds_file;
    std::vector<int> concept_ids;
    double detector_threshold = kDefaultDetectorThreshold;

    // report
    std::string run;
    std::string formats = "csv,json";
    int top_images = 3;

    // rotation
    double alpha = 1.0;
    std::string rotation_file;
    std::vector<double> alphas;
    std::vector<std::uint64_t> seeds;

    // diff
    std::string before;
    std::string after;

    // explain
    std::string image;
    std::string head;
    std::string assignments;
    int top = 4;
    double seg_quantile = 0.2;
    std::string seg_rule = "quantile";
};

ThresholdMode parse_mode(const std::string& s) {
    if (s == "auto") return ThresholdMode::automatic;
    if (s == "exact") return ThresholdMode::exact;
    if (s == "sketch") return ThresholdMode::sketch;
    throw UsageError("unknown threshold mode '" + s + "'");
}

ThresholdOptions threshold_options(const Options& o) {
    ThresholdOptions t;
    t.mode = parse_mode(o.mode);
    t.epsilon = o.epsilon;
    t.workers = o.workers;
    t.seed = o.seed;
    return t;
}

std::string abs_path(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

void checksum_into(json& inputs, const fs::path& file) {
    if (fs::is_regular_file(file)) inputs[abs_path(file.string())] = to_hex(crc32_file(file));
}

void store_inputs(json& inputs, const std::string& store) {
    checksum_into(inputs, fs::path(store) / "meta.json");
    checksum_into(inputs, fs::path(store) / "acts_index.csv");
}

void dataset_inputs(json& inputs, const std::string& dataset) {
    for (const char* f : {"index.csv", "label.csv", "category.csv"}) checksum_into(inputs, fs::path(dataset) / f);
}

void write_manifest(const fs::path& out_dir, const std::string& command, const json& config, const json& inputs) {
    fs::create_directories(out_dir);
    json m;
    m["tool"] = "dissect";
    m["version"] = kVersion;
    m["command"] = command;
    m["config"] = config;
    m["inputs"] = inputs;
    const auto path = out_dir / (command + ".manifest.json");
    std::ofstream f(path, std::ios::trunc);
    f << m.dump(2) << '\n';
    if (!f) throw ValidationError("cannot write " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

DatasetIndex open_dataset(const std::string& root, int min_samples) {
    LoadOptions lo;
    lo.min_samples = min_samples;
    auto index = load_index(root, lo);
    for (const auto& w : index.report().warnings) log_warning(w);
    return index;
}

fs::path assignments_path(const std::string& p) {
    return fs::is_directory(p) ? fs::path(p) / "assignments.csv" : fs::path(p);
}

// --- subcommands -----------------------------------------------------------

int cmd_thresholds(const Options& o, std::ostream& out) {
    require(o.store, "--store");
    const auto store = ActivationStore::open(o.store);
    const auto th = compute_thresholds(store, o.tau, threshold_options(o));
    fs::create_directories(o.out);
    write_thresholds_json(th, fs::path(o.out) / "thresholds.json");

    json config = {{"store", abs_path(o.store)}, {"tau", o.tau}, {"mode", o.mode}, {"epsilon", o.epsilon},
                   {"seed", o.seed}};
    json inputs = json::object();
    store_inputs(inputs, o.store);
    write_manifest(o.out, "thresholds", config, inputs);
    out << "thresholds for " << th.units() << " units (" << to_string(th.mode) << ") -> "
        << (fs::path(o.out) / "thresholds.json").string() << '\n';
    return kOk;
}

int cmd_score(const Options& o, std::ostream& out) {
    require(o.store, "--store");
    require(o.dataset, "--dataset");
    const auto store = ActivationStore::open(o.store);
    const auto index = open_dataset(o.dataset, o.min_samples);

    UnitThresholds th;
    if (!o.thresholds_file.empty()) {
        th = read_thresholds_json(o.thresholds_file);
        if (static_cast<int>(th.units()) != store.units())
            throw ValidationError(o.thresholds_file + " has " + std::to_string(th.units()) + " units, store has " +
                                  std::to_string(store.units()));
    } else {
        th = compute_thresholds(store, o.tau, threshold_options(o));
    }
    ScoringOptions so;
    so.workers = o.workers;
    so.concept_ids = o.concept_ids;
    const auto table = accumulate_iou(store, index, th, so);

    const fs::path dir(o.out);
    fs::create_directories(dir);
    write_thresholds_json(th, dir / "thresholds.json");
    write_iou_csv(table, dir / "iou_table.csv");
    write_iou_cache(table, dir / "iou_cache.bin");

    json config = {{"store", abs_path(o.store)},
                   {"dataset", abs_path(o.dataset)},
                   {"tau", th.tau},
                   {"mode", o.mode},
                   {"epsilon", o.epsilon},
                   {"seed", o.seed},
                   {"min_samples", o.min_samples},
                   {"concepts", o.concept_ids}};
    if (!o.thresholds_file.empty()) config["thresholds"] = abs_path(o.thresholds_file);
    json inputs = json::object();
    store_inputs(inputs, o.store);
    dataset_inputs(inputs, o.dataset);
    if (!o.thresholds_file.empty()) checksum_into(inputs, o.thresholds_file);
    write_manifest(dir, "score", config, inputs);
    out << "scored " << store.units() << " units x " << table.concept_count() << " concepts over " << store.size()
        << " images -> " << dir.string() << '\n';
    return kOk;
}

int cmd_report(const Options& o, std::ostream& out) {
    const fs::path run = o.run.empty() ? fs::path(o.out) : fs::path(o.run);
    const auto manifest = read_json(run / "score.manifest.json");
    const auto& config = manifest.at("config");

    DissectionResult r;
    r.thresholds = read_thresholds_json(run / "thresholds.json");
    r.tau = r.thresholds.tau;
    r.table = read_iou_cache(run / "iou_cache.bin");
    r.assignments = assign_detectors(r.table, o.detector_threshold);
    r.summary = summarize(r.assignments, r.table.units());

    ReportOptions ro;
    ro.formats = parse_formats(o.formats);
    ro.top_images = o.top_images;
    ro.workers = o.workers;
    std::optional<ActivationStore> store;
    std::optional<DatasetIndex> index;
    if (ro.formats.count(ReportFormat::html) && o.top_images > 0) {
        const std::string store_path = o.store.empty() ? config.at("store").get<std::string>() : o.store;
        const std::string dataset_path = o.dataset.empty() ? config.at("dataset").get<std::string>() : o.dataset;
        const int min_samples = config.value("min_samples", o.min_samples);
        store = ActivationStore::open(store_path);
        index = open_dataset(dataset_path, min_samples);
        ro.source = &*store;
        ro.index = &*index;
    }
    const auto files = emit_reports(r, o.out, ro);

    json cfg = {{"run", abs_path(run.string())},
                {"detector_threshold", o.detector_threshold},
                {"formats", o.formats},
                {"top_images", o.top_images}};
    json inputs = json::object();
    for (const char* f : {"score.manifest.json", "thresholds.json", "iou_cache.bin"}) checksum_into(inputs, run / f);
    write_manifest(o.out, "report", cfg, inputs);
    out << r.summary.unique_detectors << " unique detectors, " << r.summary.total_detectors << " detectors of "
        << r.summary.units << " units\n";
    for (const auto& f : files) out << "  " << f << '\n';
    return kOk;
}

int cmd_rotate(const Options& o, std::ostream& out) {
    require(o.store, "--store");
    const auto store = ActivationStore::open(o.store);
    RotationMatrix q = o.rotation_file.empty() ? sample_rotation(store.units(), o.seed) : read_rotation(o.rotation_file);
    if (o.rotation_file.empty()) q.seed = o.seed;
    if (q.d != store.units())
        throw ValidationError("rotation is " + std::to_string(q.d) + "-dimensional, store has " +
                              std::to_string(store.units()) + " units");
    if (!(o.alpha >= 0 && o.alpha <= 1)) throw UsageError("alpha must lie in [0, 1]");
    if (o.alpha != 1.0) q = GeodesicPath(q).power(o.alpha);

    const fs::path dir(o.out);
    fs::create_directories(dir);
    write_rotation(q, dir / "rotation.bin");
    const auto m = rotate_store(store, q, dir / "store", o.workers);

    json config = {{"store", abs_path(o.store)}, {"seed", q.seed}, {"alpha", o.alpha}};
    if (!o.rotation_file.empty()) config["rotation"] = abs_path(o.rotation_file);
    json inputs = json::object();
    store_inputs(inputs, o.store);
    if (!o.rotation_file.empty()) checksum_into(inputs, o.rotation_file);
    write_manifest(dir, "rotate", config, inputs);
    out << "rotated " << m.image_count << " images (d=" << q.d << ", alpha=" << format_number(o.alpha)
        << ", orthogonality error " << orthogonality_error(q.q) << ") -> " << (dir / "store").string() << '\n';
    return kOk;
}

int cmd_sweep_tau(const Options& o, std::ostream& out) {
    require(o.store, "--store");
    require(o.dataset, "--dataset");
    std::vector<double> taus = o.taus;
    if (taus.empty()) taus.assign(kDefaultTauSweep.begin(), kDefaultTauSweep.end());
    std::sort(taus.begin(), taus.end());
    const auto store = ActivationStore::open(o.store);
    const auto index = open_dataset(o.dataset, o.min_samples);
    DissectionOptions d;
    d.detector_threshold = o.detector_threshold;
    d.thresholds = threshold_options(o);
    d.scoring.workers = o.workers;
    d.scoring.concept_ids = o.concept_ids;
    const auto results = tau_sweep(store, index, taus, d);

    const fs::path dir(o.out);
    fs::create_directories(dir);
    std::ofstream csv(dir / "tau_sweep.csv", std::ios::trunc);
    csv << "tau,unique_detectors,total_detectors,ratio\n";
    for (const auto& r : results) {
        csv << format_number(r.tau) << ',' << r.summary.unique_detectors << ',' << r.summary.total_detectors << ','
            << format_number(r.summary.ratio) << '\n';
        out << "tau=" << format_number(r.tau) << ": " << r.summary.unique_detectors << " unique, "
            << r.summary.total_detectors << " detectors\n";
    }
    if (!csv) throw ValidationError("cannot write " + (dir / "tau_sweep.csv").string());

    json config = {{"store", abs_path(o.store)},     {"dataset", abs_path(o.dataset)},
                   {"taus", taus},                   {"mode", o.mode},
                   {"epsilon", o.epsilon},           {"seed", o.seed},
                   {"min_samples", o.min_samples},   {"detector_threshold", o.detector_threshold},
                   {"concepts", o.concept_ids}};
    json inputs = json::object();
    store_inputs(inputs, o.store);
    dataset_inputs(inputs, o.dataset);
    write_manifest(dir, "sweep-tau", config, inputs);
    return kOk;
}

int cmd_sweep_rotation(const Options& o, std::ostream& out) {
    require(o.store, "--store");
    require(o.dataset, "--dataset");
    std::vector<double> alphas = o.alphas;
    if (alphas.empty()) alphas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<std::uint64_t> seeds = o.seeds;
    if (seeds.empty()) seeds = {o.seed};
    const auto store = ActivationStore::open(o.store);
    const auto index = open_dataset(o.dataset, o.min_samples);
    DissectionOptions d;
    d.detector_threshold = o.detector_threshold;
    d.thresholds = threshold_options(o);
    d.scoring.workers = o.workers;
    d.scoring.concept_ids = o.concept_ids;
    const auto points = rotation_sweep(store, index, alphas, seeds, o.tau, d);

    const fs::path dir(o.out);
    fs::create_directories(dir);
    write_rotation_sweep_csv(points, dir / "rotation_sweep.csv");
    for (const auto& p : points)
        out << "alpha=" << format_number(p.alpha) << " seed=" << p.seed << ": " << p.summary.unique_detectors
            << " unique, " << p.summary.total_detectors << " detectors\n";

    json config = {{"store", abs_path(o.store)},   {"dataset", abs_path(o.dataset)},
                   {"tau", o.tau},                 {"alphas", alphas},
                   {"seeds", seeds},               {"mode", o.mode},
                   {"epsilon", o.epsilon},         {"min_samples", o.min_samples},
                   {"detector_threshold", o.detector_threshold}};
    json inputs = json::object();
    store_inputs(inputs, o.store);
    dataset_inputs(inputs, o.dataset);
    write_manifest(dir, "sweep-rotation", config, inputs);
    return kOk;
}

int cmd_diff(const Options& o, std::ostream& out) {
    require(o.before, "--before");
    require(o.after, "--after");
    const auto before_path = assignments_path(o.before), after_path = assignments_path(o.after);
    const auto a = read_assignments_csv(before_path);
    const auto b = read_assignments_csv(after_path);
    const auto report = diff_runs(a, b);

    const fs::path dir(o.out);
    fs::create_directories(dir);
    write_evolution_csv(report, dir / "evolution.csv");
    write_transitions_csv(report, dir / "transitions.csv");
    json summary = {{"units", report.units.size()},
                    {"stable", report.stable},
                    {"stable_fraction", report.stable_fraction}};
    {
        std::ofstream f(dir / "diff_summary.json", std::ios::trunc);
        f << summary.dump(2) << '\n';
    }
    json config = {{"before", abs_path(before_path.string())}, {"after", abs_path(after_path.string())}};
    json inputs = json::object();
    checksum_into(inputs, before_path);
    checksum_into(inputs, after_path);
    write_manifest(dir, "diff", config, inputs);
    out << report.stable << " of " << report.units.size() << " units stable ("
        << format_number(report.stable_fraction) << ")\n";
    return kOk;
}

int cmd_explain(const Options& o, std::ostream& out) {
    require(o.store, "--store");
    require(o.dataset, "--dataset");
    require(o.image, "--image");
    require(o.head, "--head");
    SegmentationRule rule;
    if (o.seg_rule == "quantile") rule = SegmentationRule::quantile;
    else if (o.seg_rule == "fraction-of-max") rule = SegmentationRule::fraction_of_max;
    else throw UsageError("unknown segmentation rule '" + o.seg_rule + "'");

    const auto store = ActivationStore::open(o.store);
    const auto index = open_dataset(o.dataset, o.min_samples);
    const auto* rec = index.find_image(o.image);
    if (!rec) throw ValidationError("image " + o.image + " is not in the dataset index");
    const auto volume = store.read_volume(o.image);
    const auto head = load_linear_head(o.head, store.units());
    std::vector<DetectorAssignment> assignments;
    if (!o.assignments.empty()) assignments = read_assignments_csv(assignments_path(o.assignments));

    ExplainOptions eo;
    eo.top_m = o.top;
    eo.seg_quantile = o.seg_quantile;
    eo.rule = rule;
    const auto geometry = detail::checked_geometry(store.meta(), *rec, volume.height, volume.width);
    const auto e = explain_prediction(volume, head, assignments, geometry, rec->height, rec->width, eo);
    const fs::path dir(o.out);
    const auto files = write_explanation(e, dir);

    json config = {{"store", abs_path(o.store)}, {"dataset", abs_path(o.dataset)}, {"image", o.image},
                   {"head", abs_path(o.head)},   {"top", o.top},                   {"seg_quantile", o.seg_quantile},
                   {"seg_rule", o.seg_rule}};
    if (!o.assignments.empty()) config["assignments"] = abs_path(assignments_path(o.assignments).string());
    json inputs = json::object();
    store_inputs(inputs, o.store);
    dataset_inputs(inputs, o.dataset);
    checksum_into(inputs, o.head);
    if (!o.assignments.empty()) checksum_into(inputs, assignments_path(o.assignments));
    write_manifest(dir, "explain", config, inputs);

    out << o.image << ": predicted " << e.class_name << " (score " << format_number(e.score) << ")\n";
    for (std::size_t r = 0; r < e.segmentations.size(); ++r) {
        const auto& c = e.contributions[r];
        out << "  unit " << c.unit << " contribution " << format_number(c.contribution);
        if (c.label) out << " [" << c.label->concept_name << ", " << to_string(c.label->category) << "]";
        out << '\n';
    }
    return kOk;
}

int cmd_validate(const Options& o, std::ostream& out) {
    if (o.store.empty() && o.dataset.empty()) throw UsageError("validate needs --store and/or --dataset");
    std::optional<ActivationStore> store;
    std::optional<DatasetIndex> index;
    if (!o.store.empty()) {
        store = ActivationStore::open(o.store);
        store->verify();
        const auto visited = scan(
            *store, o.workers, std::size_t{0}, [](std::size_t& n, std::size_t, const ActivationVolume&) { ++n; },
            [](std::size_t& into, std::size_t&& from) { into += from; });
        out << "store " << o.store << ": OK (" << visited << " images, " << store->units() << " units, layer "
            << store->meta().layer_name << ")\n";
    }
    if (!o.dataset.empty()) {
        index = open_dataset(o.dataset, o.min_samples);
        out << "dataset " << o.dataset << ": OK (" << index->images().size() << " images, "
            << index->concepts().size() << " concepts retained, " << index->report().dropped.size() << " dropped)\n";
        if (!o.color_table.empty()) {
            const auto table = load_color_table(o.color_table);
            out << "color table " << o.color_table << ": OK (" << table.size() << " entries)\n";
        }
    }
    if (store && index) {
        for (std::size_t i = 0; i < store->size(); ++i) {
            const auto* rec = index->find_image(store->image_id(i));
            if (!rec) throw ValidationError("image " + store->image_id(i) + " is in the store but not the dataset");
            const auto [h, w] = store->dims(i);
            detail::checked_geometry(store->meta(), *rec, h, w);
        }
        out << "store and dataset agree on " << store->size() << " images\n";
    }
    return kOk;
}

int classify(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return kUsage;
    if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const fs::filesystem_error*>(&e))
        return kDataError;
    if (dynamic_cast<const ScanError*>(&e)) {
        try {
            std::rethrow_if_nested(e);
        } catch (const std::exception& inner) {
            return classify(inner);
        } catch (...) {
        }
        return kDataError;
    }
    return kInternalError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Network dissection: align CNN units with labeled visual concepts.", "dissect"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    auto common = [&o](CLI::App* sub) {
        sub->add_option("--workers", o.workers, "Worker threads (default: $DISSECT_WORKERS, else all cores)")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--out", o.out, "Output directory")->capture_default_str();
        sub->add_flag("--quiet", o.quiet, "Suppress warnings");
        sub->add_flag("--verbose", o.verbose, "Log progress");
    };
    auto store_opt = [&o](CLI::App* sub) { sub->add_option("--store", o.store, "Activation store directory"); };
    auto dataset_opt = [&o](CLI::App* sub) {
        sub->add_option("--dataset", o.dataset, "Dataset root");
        sub->add_option("--min-samples", o.min_samples, "Drop concepts seen on fewer images")
            ->capture_default_str();
    };
    auto threshold_opts = [&o](CLI::App* sub) {
        sub->add_option("--mode", o.mode, "Threshold mode: auto, exact or sketch")->capture_default_str();
        sub->add_option("--epsilon", o.epsilon, "Sketch rank error bound")->capture_default_str();
        sub->add_option("--seed", o.seed, "Seed")->capture_default_str();
    };
    auto tau_opt = [&o](CLI::App* sub) {
        sub->add_option("--tau", o.tau, "Top-quantile level")->capture_default_str();
    };
    auto detector_opt = [&o](CLI::App* sub) {
        sub->add_option("--detector-threshold", o.detector_threshold, "Minimum IoU for a detector")
            ->capture_default_str();
    };
    auto concepts_opt = [&o](CLI::App* sub) {
        sub->add_option("--concepts", o.concept_ids, "Concept ids to score (default all)")->delimiter(',');
    };

    auto* thresholds = app.add_subcommand("thresholds", "Compute per-unit activation thresholds");
    common(thresholds), store_opt(thresholds), tau_opt(thresholds), threshold_opts(thresholds);

    auto* score = app.add_subcommand("score", "Compute the unit x concept IoU table");
    common(score), store_opt(score), dataset_opt(score), tau_opt(score), threshold_opts(score), concepts_opt(score);
    score->add_option("--thresholds", o.thresholds_file, "Reuse a thresholds.json");

    auto* report = app.add_subcommand("report", "Assign detectors and write reports from a scored run");
    common(report), detector_opt(report);
    report->add_option("--run", o.run, "Directory written by score (default: --out)");
    report->add_option("--formats", o.formats, "Any of csv,json,html")->capture_default_str();
    report->add_option("--top-images", o.top_images, "Images per detector page")->capture_default_str();
    report->add_option("--store", o.store, "Override the store recorded by score");
    report->add_option("--dataset", o.dataset, "Override the dataset recorded by score");

    auto* rotate = app.add_subcommand("rotate", "Write a rotated copy of a store");
    common(rotate), store_opt(rotate);
    rotate->add_option("--seed", o.seed, "Rotation seed")->capture_default_str();
    rotate->add_option("--alpha", o.alpha, "Fractional power in [0, 1]")->capture_default_str();
    rotate->add_option("--rotation", o.rotation_file, "Use a saved rotation instead of sampling");

    auto* sweep_tau = app.add_subcommand("sweep-tau", "Dissect at several tau levels in one pass");
    common(sweep_tau), store_opt(sweep_tau), dataset_opt(sweep_tau), threshold_opts(sweep_tau);
    detector_opt(sweep_tau), concepts_opt(sweep_tau);
    sweep_tau->add_option("--taus", o.taus, "Tau levels")->delimiter(',');

    auto* sweep_rot = app.add_subcommand("sweep-rotation", "Unique detectors versus rotation alpha");
    common(sweep_rot), store_opt(sweep_rot), dataset_opt(sweep_rot), tau_opt(sweep_rot);
    threshold_opts(sweep_rot), detector_opt(sweep_rot), concepts_opt(sweep_rot);
    sweep_rot->add_option("--alphas", o.alphas, "Alpha grid (default 0,0.2,...,1)")->delimiter(',');
    sweep_rot->add_option("--seeds", o.seeds, "Rotation seeds (default --seed)")->delimiter(',');

    auto* diff = app.add_subcommand("diff", "Compare detector assignments of two runs");
    common(diff);
    diff->add_option("--before", o.before, "assignments.csv or a report directory");
    diff->add_option("--after", o.after, "assignments.csv or a report directory");

    auto* explain = app.add_subcommand("explain", "Explain a linear prediction by unit contributions");
    common(explain), store_opt(explain), dataset_opt(explain);
    explain->add_option("--image", o.image, "Image id");
    explain->add_option("--head", o.head, "head.csv with class,unit,weight");
    explain->add_option("--top", o.top, "Units to segment")->capture_default_str();
    explain->add_option("--seg-quantile", o.seg_quantile, "Segmentation level")->capture_default_str();
    explain->add_option("--seg-rule", o.seg_rule, "quantile or fraction-of-max")->capture_default_str();
    explain->add_option("--assignments", o.assignments, "Label units from assignments.csv or a report directory");

    auto* validate = app.add_subcommand("validate", "Check store and dataset integrity");
    common(validate), store_opt(validate), dataset_opt(validate);
    validate->add_option("--color-table", o.color_table, "Also check an RGB to color-name table");

    if (args.empty()) {
        err << app.help();
        return kUsage;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        if (app.get_subcommands().empty())
            out << app.help();
        else
            out << app.get_subcommands().front()->help("dissect");
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    set_log_level(o.quiet ? LogLevel::quiet : (o.verbose ? LogLevel::info : LogLevel::warning));
    auto* sub = app.get_subcommands().front();
    const auto name = sub->get_name();
    try {
        if (name == "thresholds") return cmd_thresholds(o, out);
        if (name == "score") return cmd_score(o, out);
        if (name == "report") return cmd_report(o, out);
        if (name == "rotate") return cmd_rotate(o, out);
        if (name == "sweep-tau") return cmd_sweep_tau(o, out);
        if (name == "sweep-rotation") return cmd_sweep_rotation(o, out);
        if (name == "diff") return cmd_diff(o, out);
        if (name == "explain") return cmd_explain(o, out);
        if (name == "validate") return cmd_validate(o, out);
    } catch (const std::exception& e) {
        const int code = classify(e);
        err << "error: " << e.what() << '\n';
        if (code == kUsage) err << '\n' << sub->help();
        return code;
    } catch (...) {
        err << "error: unknown failure\n";
        return kInternalError;
    }
    return kInternalError;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace netdissect::cli
