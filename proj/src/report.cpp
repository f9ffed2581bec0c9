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

#include "netdissect/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "netdissect/errors.hpp"
#include "netdissect/parallel.hpp"
#include "netdissect/png_io.hpp"
#include "netdissect/upsample.hpp"

namespace netdissect {

namespace {

bool better(const TopImage& a, const TopImage& b) {
    return a.peak != b.peak ? a.peak > b.peak : a.record < b.record;
}

std::string html_escape(std::string_view s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(ch);
        }
    }
    return out;
}

std::string unit_page_name(int unit) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "unit_%04d.html", unit);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw ValidationError("cannot write " + path.string());
}

// Base picture (dataset image if one exists, else the activation map in
// gray) with the unit's binary segmentation tinted red.
RgbImage overlay(const ActivationVolume& volume, int unit, const ImageRecord& rec, const RfGeometry& geometry,
                 float threshold, const std::filesystem::path& image_file) {
    const auto s = upsample(volume.unit(unit), volume.height, volume.width, geometry, rec.height, rec.width);
    RgbImage out;
    if (std::filesystem::is_regular_file(image_file)) {
        out = read_png_rgb(image_file);
        if (out.width != rec.width || out.height != rec.height) out = RgbImage{};
    }
    if (out.pixels.empty()) {
        out.width = rec.width;
        out.height = rec.height;
        out.pixels.resize(3 * static_cast<std::size_t>(rec.width) * rec.height);
        const auto [mn, mx] = std::minmax_element(s.values.begin(), s.values.end());
        const double span = *mx - *mn > 0 ? *mx - *mn : 1.0;
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            const auto g = static_cast<std::uint8_t>(255.0 * (s.values[i] - *mn) / span);
            out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = g;
        }
    }
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        if (s.values[i] < threshold) continue;
        auto* px = &out.pixels[3 * i];
        px[0] = static_cast<std::uint8_t>((px[0] + 255) / 2);
        px[1] = static_cast<std::uint8_t>(px[1] / 2);
        px[2] = static_cast<std::uint8_t>(px[2] / 2);
    }
    return out;
}

}  // namespace

std::vector<std::vector<TopImage>> top_activating_images(const VolumeSource& source, int n, int workers) {
    const auto k = static_cast<std::size_t>(source.units());
    if (n < 0) throw UsageError("top image count must be non-negative");
    const auto limit = static_cast<std::size_t>(n);
    using Table = std::vector<std::vector<TopImage>>;
    auto keep_best = [limit](std::vector<TopImage>& v) {
        std::sort(v.begin(), v.end(), better);
        if (v.size() > limit) v.resize(limit);
    };
    return scan(
        source, workers, Table(k),
        [&](Table& t, std::size_t record, const ActivationVolume& volume) {
            for (std::size_t u = 0; u < k; ++u) {
                const auto plane = volume.unit(static_cast<int>(u));
                const float peak = *std::max_element(plane.begin(), plane.end());
                t[u].push_back({record, peak});
                if (t[u].size() > 2 * limit + 8) keep_best(t[u]);
            }
        },
        [&](Table& into, Table&& from) {
            for (std::size_t u = 0; u < k; ++u) {
                into[u].insert(into[u].end(), from[u].begin(), from[u].end());
                keep_best(into[u]);
            }
        });
}

std::set<ReportFormat> parse_formats(const std::string& list) {
    std::set<ReportFormat> out = {ReportFormat::csv, ReportFormat::json};
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (item.empty()) continue;
        if (item == "csv") out.insert(ReportFormat::csv);
        else if (item == "json") out.insert(ReportFormat::json);
        else if (item == "html") out.insert(ReportFormat::html);
        else throw UsageError("unknown report format '" + item + "'");
    }
    return out;
}

std::string unique_detectors_svg(const LayerSummary& summary) {
    constexpr int bar_w = 60, gap = 20, chart_h = 200, top = 30, bottom = 40;
    const int max_count = std::max(1, *std::max_element(summary.unique_by_category.begin(),
                                                        summary.unique_by_category.end()));
    const int width = gap + static_cast<int>(kCategoryCount) * (bar_w + gap);
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << chart_h + top + bottom << "\">\n";
    svg << "<text x=\"" << gap << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">Unique detectors: "
        << summary.unique_detectors << "</text>\n";
    for (std::size_t i = 0; i < kCategoryCount; ++i) {
        const int count = summary.unique_by_category[i];
        const int h = count * chart_h / max_count;
        const int x = gap + static_cast<int>(i) * (bar_w + gap);
        svg << "<rect class=\"bar\" data-category=\"" << to_string(kAllCategories[i]) << "\" data-count=\"" << count
            << "\" x=\"" << x << "\" y=\"" << top + chart_h - h << "\" width=\"" << bar_w << "\" height=\"" << h
            << "\" fill=\"#4a7ab5\"/>\n";
        svg << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << top + chart_h + 15
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
            << to_string(kAllCategories[i]) << "</text>\n";
        svg << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << top + chart_h - h - 4
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << count << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::vector<std::string> emit_reports(const DissectionResult& result, const std::filesystem::path& out_dir,
                                      const ReportOptions& options) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw ValidationError("cannot create report directory " + out_dir.string());

    std::vector<std::string> written;
    const auto& layer = result.table.layer;

    write_text(out_dir / "summary.json",
               summary_to_json(result.summary, result.tau,
                               result.assignments.empty() ? kDefaultDetectorThreshold
                                                          : result.assignments.front().detector_threshold,
                               layer) +
                   "\n");
    written.emplace_back("summary.json");
    write_assignments_csv(result.assignments, out_dir / "assignments.csv");
    written.emplace_back("assignments.csv");
    write_iou_csv(result.table, out_dir / "iou_table.csv");
    written.emplace_back("iou_table.csv");

    if (options.formats.count(ReportFormat::html)) {
        const auto report_dir = out_dir / "report";
        const auto chart_dir = out_dir / "charts";
        std::filesystem::create_directories(report_dir / "images");
        std::filesystem::create_directories(chart_dir);
        write_text(chart_dir / "unique_by_category.svg", unique_detectors_svg(result.summary));
        written.emplace_back("charts/unique_by_category.svg");

        std::vector<std::vector<TopImage>> tops;
        const bool have_images = options.source && options.index && options.top_images > 0;
        if (have_images) tops = top_activating_images(*options.source, options.top_images, options.workers);

        std::ostringstream index_html;
        index_html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Dissection of "
                   << html_escape(layer) << "</title></head>\n<body>\n";
        index_html << "<h1>Dissection of " << html_escape(layer) << "</h1>\n";
        index_html << "<p>tau = " << format_number(result.tau) << "; units = " << result.summary.units
                   << "; detectors = <span id=\"total-detectors\">" << result.summary.total_detectors
                   << "</span>; unique detectors = <span id=\"unique-detectors\">" << result.summary.unique_detectors
                   << "</span></p>\n";
        index_html << "<img src=\"../charts/unique_by_category.svg\" alt=\"unique detectors per category\">\n";
        index_html << "<table>\n<tr><th>unit</th><th>concept</th><th>category</th><th>IoU</th></tr>\n";

        for (const auto& a : result.assignments) {
            if (!a.assigned) continue;
            const auto page = unit_page_name(a.unit);
            index_html << "<tr class=\"detector\"><td><a href=\"" << page << "\">" << a.unit << "</a></td><td>"
                       << html_escape(a.concept_name) << "</td><td>" << to_string(a.category) << "</td><td>"
                       << format_number(a.iou) << "</td></tr>\n";

            std::ostringstream unit_html;
            unit_html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Unit " << a.unit
                      << "</title></head>\n<body>\n<h1>Unit " << a.unit << ": " << html_escape(a.concept_name)
                      << " (" << to_string(a.category) << ", IoU " << format_number(a.iou) << ")</h1>\n";
            if (have_images) {
                const auto unit = static_cast<std::size_t>(a.unit);
                for (std::size_t r = 0; r < tops[unit].size(); ++r) {
                    const auto& top = tops[unit][r];
                    const auto volume = options.source->read(top.record);
                    const auto* rec = options.index->find_image(volume.image_id);
                    if (!rec) continue;
                    const auto geometry = detail::checked_geometry(options.source->meta(), *rec, volume.height,
                                                                   volume.width);
                    char name[64];
                    std::snprintf(name, sizeof name, "unit%04d_top%zu.png", a.unit, r);
                    const auto image = overlay(volume, a.unit, *rec, geometry, result.thresholds.levels[unit],
                                               options.index->root() / "images" / (rec->image_id + ".png"));
                    write_png_rgb8(report_dir / "images" / name, image);
                    written.emplace_back(std::string("report/images/") + name);
                    unit_html << "<div class=\"top-image\"><img src=\"images/" << name << "\" alt=\""
                              << html_escape(rec->image_id) << "\"><br>" << html_escape(rec->image_id)
                              << " (peak " << format_number(top.peak) << ")</div>\n";
                }
            }
            unit_html << "<p><a href=\"index.html\">back</a></p>\n</body></html>\n";
            write_text(report_dir / page, unit_html.str());
            written.push_back("report/" + page);
        }
        index_html << "</table>\n</body></html>\n";
        write_text(report_dir / "index.html", index_html.str());
        written.emplace_back("report/index.html");
    }
    std::sort(written.begin(), written.end());
    return written;
}

}  // namespace netdissect
