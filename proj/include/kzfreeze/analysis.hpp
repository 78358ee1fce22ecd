// Copyright 2026 The kzfreeze Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/// Defect counting and frozen-spin disagreement maps.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kzfreeze/dynamics.hpp"
#include "kzfreeze/ed.hpp"
#include "kzfreeze/sampler.hpp"
#include "kzfreeze/transitions.hpp"

namespace kzfreeze {

// ---------------------------------------------------------------------------
// Defects.

/// sign(m_i(T_final, delta = 0)); 0 where the sign is indeterminate.
inline SuperspinRead final_equilibrium_signs(const SquareLatticeInstance& x, double t_final) {
    if (!(t_final >= 0)) throw std::invalid_argument("final temperature must be nonnegative");
    auto spec = diagonalize(make_problem(x, 0.0));
    auto m = thermal_magnetization(spec, t_final);
    SuperspinRead s{};
    for (int i = 0; i < kSites; ++i) s[i] = sign_of(m[std::size_t(i)]);
    return s;
}

/// Effective final temperature: T_phys in units of the superspin scale at s = 1.
inline double default_final_temperature(const Schedule& schedule, double alpha, double alpha_s, CellMode mode,
                                        double t_phys) {
    return anneal_to_effective(schedule, 1.0, alpha, alpha_s, mode, t_phys).temperature;
}

struct DefectReport {
    std::array<long, 4> defects{};        // per spin type
    std::array<long, 4> spin_reads{};     // eligible (spin, read) pairs per type
    long excluded = 0;                    // pairs skipped: indeterminate reference or tied read
    std::vector<std::string> log;

    double rate(SpinType t) const {
        auto k = std::size_t(t);
        return spin_reads[k] ? double(defects[k]) / double(spin_reads[k]) : 0.0;
    }
    /// Headline rate on Type I spins.
    double type_i_rate() const { return rate(SpinType::TypeI); }
    /// Type I defects per read, divided by a normalization spin count.
    double normalized(long reads_per_class, double normalization) const {
        return double(defects[1]) / double(reads_per_class) / normalization;
    }

    DefectReport& operator+=(const DefectReport& o) {
        for (std::size_t k = 0; k < 4; ++k) {
            defects[k] += o.defects[k];
            spin_reads[k] += o.spin_reads[k];
        }
        excluded += o.excluded;
        log.insert(log.end(), o.log.begin(), o.log.end());
        return *this;
    }
};

/// Counts reads whose spin sign differs from `reference` on spins whose type
/// passes `filter`. Both must be in the canonical frame.
inline DefectReport count_defects(const SampleSet& samples, const SuperspinRead& reference,
                                  const std::array<SpinTypeRecord, kSites>& types,
                                  const std::array<bool, 4>& filter = {false, true, true, true}) {
    if (samples.metadata.contains("frame") && samples.metadata["frame"] != "canonical")
        throw std::invalid_argument("samples are not in the canonical frame");
    if (samples.reads.size() != samples.frames.size()) throw std::invalid_argument("sample frames are incomplete");
    DefectReport rep;
    for (int i = 0; i < kSites; ++i) {
        if (types[i].class_id >= 0 && samples.class_id >= 0 && types[i].class_id != samples.class_id)
            throw std::invalid_argument("samples and spin types belong to different classes");
        const auto k = std::size_t(types[i].type);
        if (!filter[k]) continue;
        if (reference[i] == 0) {
            rep.excluded += samples.size();
            rep.log.push_back("class " + std::to_string(samples.class_id) + " spin " + std::to_string(i) +
                              ": indeterminate final sign, excluded");
            continue;
        }
        for (const auto& r : samples.reads) {
            if (r[i] == 0) {
                ++rep.excluded;
                continue;
            }
            ++rep.spin_reads[k];
            rep.defects[k] += r[i] != reference[i];
        }
    }
    return rep;
}

struct DefectCurvePoint {
    double s = 0.0;
    double temperature = 0.0, delta = 0.0;
    std::array<long, 4> defects{};  // spins whose equilibrium sign differs from the final one, per type
    long total() const { return defects[0] + defects[1] + defects[2] + defects[3]; }
};

/// Equilibrium defect count along the anneal: at each s the effective
/// (T, delta) equilibrium sign is compared with the final sign. Points with
/// B(s) = 0 are skipped.
inline std::vector<DefectCurvePoint> equilibrium_defect_curve(
    const std::vector<SquareLatticeInstance>& classes, const std::vector<std::array<SpinTypeRecord, kSites>>& types,
    const Schedule& schedule, double alpha, double alpha_s, CellMode mode, double t_phys,
    const std::vector<double>& s_points) {
    if (classes.size() != types.size()) throw std::invalid_argument("one type record per class is required");
    const double t_final = default_final_temperature(schedule, alpha, alpha_s, mode, t_phys);
    std::vector<SuperspinRead> final_signs;
    for (const auto& x : classes) final_signs.push_back(final_equilibrium_signs(x, t_final));
    std::vector<DefectCurvePoint> out;
    for (double s : s_points) {
        if (!(schedule.B(s) > 0)) continue;
        auto eff = anneal_to_effective(schedule, s, alpha, alpha_s, mode, t_phys);
        DefectCurvePoint p{s, eff.temperature, eff.delta, {}};
        for (std::size_t c = 0; c < classes.size(); ++c) {
            auto spec = diagonalize(make_problem(classes[c], eff.delta));
            auto m = thermal_magnetization(spec, eff.temperature);
            for (int i = 0; i < kSites; ++i) {
                if (final_signs[c][i] == 0) continue;
                if (sign_of(m[std::size_t(i)]) != final_signs[c][i]) ++p.defects[std::size_t(types[c][i].type)];
            }
        }
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Disagreement maps.

enum class CompareMode {
    Majority,  // per-spin majority sign over reads
    PerRead,   // every read counted separately
};

struct ClassData {
    int class_id = -1;
    const MagnetizationGrid* grid = nullptr;
    const std::array<SpinTypeRecord, kSites>* types = nullptr;
    const SampleSet* samples = nullptr;  // null: class missing
};

struct DisagreementGrid {
    GridSpec grid;
    CompareMode mode = CompareMode::Majority;
    std::vector<long> counts;      // [T][delta]
    std::vector<long> eligible;    // comparisons per cell (the same in every cell)
    long denominator = 0;          // transitioning spins considered
    int missing_classes = 0;
    std::vector<std::string> warnings;

    int nt() const { return grid.temperature.size(); }
    int nd() const { return grid.delta.size(); }
    std::size_t index(int t, int d) const { return std::size_t(t) * std::size_t(nd()) + std::size_t(d); }
    long count(int t, int d) const { return counts[index(t, d)]; }
    double fraction(int t, int d) const {
        auto e = eligible[index(t, d)];
        return e ? double(count(t, d)) / double(e) : 0.0;
    }
    long min_count() const { return *std::min_element(counts.begin(), counts.end()); }

    /// Cell with the fewest disagreements (first in [T][delta] order on ties).
    std::pair<int, int> argmin() const {
        auto k = std::size_t(std::min_element(counts.begin(), counts.end()) - counts.begin());
        return {int(k / std::size_t(nd())), int(k % std::size_t(nd()))};
    }
    bool is_minimal(int t, int d) const { return count(t, d) == min_count(); }
};

/// For each grid cell, the number of (transitioning spin) comparisons whose
/// sampled sign differs from sign(m_i(T, delta)). Type 0 spins are skipped.
/// An indeterminate predicted sign matches no sample and counts as a
/// disagreement, so every cell has the same denominator. Tied majorities
/// count as disagreements too.
inline DisagreementGrid disagreement_grid(const std::vector<ClassData>& data, CompareMode mode = CompareMode::Majority) {
    DisagreementGrid out;
    out.mode = mode;
    const ClassData* first = nullptr;
    for (const auto& c : data)
        if (c.grid) {
            first = &c;
            break;
        }
    if (!first) throw std::invalid_argument("no magnetization grids supplied");
    out.grid = first->grid->grid;
    const int nt = out.nt(), nd = out.nd();
    out.counts.assign(std::size_t(nt) * std::size_t(nd), 0);
    out.eligible.assign(out.counts.size(), 0);
    const auto hash = hash_grid_spec(out.grid);
    for (const auto& c : data) {
        if (!c.samples || !c.grid || !c.types) {
            ++out.missing_classes;
            out.warnings.push_back("class " + std::to_string(c.class_id) + " has no data; denominator adjusted");
            continue;
        }
        if (hash_grid_spec(c.grid->grid) != hash) throw std::invalid_argument("classes use different grids");
        if (c.samples->class_id >= 0 && c.samples->class_id != c.class_id)
            throw std::invalid_argument("sample set belongs to another class");
        const auto sums = c.samples->sign_sums();
        std::array<long, kSites> plus{}, minus{};
        for (const auto& r : c.samples->reads)
            for (int i = 0; i < kSites; ++i) {
                plus[i] += r[i] > 0;
                minus[i] += r[i] < 0;
            }
        const long reads = c.samples->size();
        for (int i = 0; i < kSites; ++i) {
            if ((*c.types)[i].type == SpinType::Type0) continue;
            ++out.denominator;
            const Sign majority = sums[i] > 0 ? Sign(1) : (sums[i] < 0 ? Sign(-1) : Sign(0));
            for (int t = 0; t < nt; ++t)
                for (int d = 0; d < nd; ++d) {
                    const Sign predicted = sign_of(c.grid->at(i, t, d));
                    auto k = out.index(t, d);
                    if (mode == CompareMode::Majority) {
                        ++out.eligible[k];
                        out.counts[k] += predicted == 0 || majority != predicted;
                    } else {
                        out.eligible[k] += reads;
                        out.counts[k] += reads - (predicted > 0 ? plus[i] : (predicted < 0 ? minus[i] : 0));
                    }
                }
        }
    }
    return out;
}

/// Cells within `slack` disagreements of the best cell.
inline std::vector<bool> best_agreement_region(const DisagreementGrid& g, long slack) {
    if (slack < 0) throw std::invalid_argument("slack must be nonnegative");
    const long limit = g.min_count() + slack;
    std::vector<bool> mask(g.counts.size());
    for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = g.counts[k] <= limit;
    return mask;
}

/// Mean (T, delta) over a region mask.
inline TransitionPoint region_centroid(const DisagreementGrid& g, const std::vector<bool>& mask) {
    double st = 0, sd = 0;
    long n = 0;
    for (int t = 0; t < g.nt(); ++t)
        for (int d = 0; d < g.nd(); ++d)
            if (mask[g.index(t, d)]) {
                st += g.grid.temperature.values[std::size_t(t)];
                sd += g.grid.delta.values[std::size_t(d)];
                ++n;
            }
    if (n == 0) throw std::invalid_argument("empty region");
    return {st / double(n), sd / double(n)};
}

inline std::string disagreement_to_csv(const DisagreementGrid& g, std::string_view config_hash) {
    std::string out = provenance_comment(config_hash);
    out += "T,delta,count,fraction\n";
    for (int t = 0; t < g.nt(); ++t)
        for (int d = 0; d < g.nd(); ++d)
            out += csv_number(g.grid.temperature.values[std::size_t(t)]) + "," +
                   csv_number(g.grid.delta.values[std::size_t(d)]) + "," + std::to_string(g.count(t, d)) + "," +
                   csv_number(g.fraction(t, d)) + "\n";
    return out;
}

inline std::string defect_report_csv(const std::vector<std::pair<double, DefectReport>>& by_time,
                                     std::string_view config_hash) {
    std::string out = provenance_comment(config_hash);
    out += "t_f,type,defects,spin_reads,rate\n";
    for (const auto& [tf, rep] : by_time)
        for (auto t : {SpinType::Type0, SpinType::TypeI, SpinType::TypeII, SpinType::TypeIII})
            out += csv_number(tf) + "," + to_string(t) + "," + std::to_string(rep.defects[std::size_t(t)]) + "," +
                   std::to_string(rep.spin_reads[std::size_t(t)]) + "," + csv_number(rep.rate(t)) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// SVG heat map.

struct HeatmapOptions {
    long slack = 3;
    std::optional<TransitionPoint> marker;  // drawn as an X
    std::string title;
    int cell_px = 4;
};

/// Fraction heat map (T across, delta up) with the best-agreement region
/// outlined and an optional X marker.
inline std::string disagreement_svg(const DisagreementGrid& g, const HeatmapOptions& opt,
                                    std::string_view config_hash) {
    const int nt = g.nt(), nd = g.nd(), px = std::max(1, opt.cell_px);
    const int margin = 50, w = nt * px, h = nd * px;
    auto region = best_agreement_region(g, opt.slack);
    double fmax = 0.0;
    for (int t = 0; t < nt; ++t)
        for (int d = 0; d < nd; ++d) fmax = std::max(fmax, g.fraction(t, d));
    if (fmax <= 0) fmax = 1.0;

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<!-- kzfreeze " << kToolVersion << " config_hash=" << config_hash << " -->\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w + 2 * margin << "\" height=\"" << h + 2 * margin
        << "\">\n";
    svg << "<text x=\"" << margin << "\" y=\"20\" font-size=\"12\">" << opt.title << "</text>\n";
    svg << "<g transform=\"translate(" << margin << "," << margin << ")\">\n";
    for (int t = 0; t < nt; ++t)
        for (int d = 0; d < nd; ++d) {
            double f = g.fraction(t, d) / fmax;
            int r = int(255 * f), b = int(255 * (1 - f));
            svg << "<rect x=\"" << t * px << "\" y=\"" << (nd - 1 - d) * px << "\" width=\"" << px << "\" height=\""
                << px << "\" fill=\"rgb(" << r << ",40," << b << ")\"/>\n";
        }
    // Region boundary: edges between a region cell and a non-region cell.
    svg << "<path fill=\"none\" stroke=\"white\" stroke-width=\"1\" d=\"";
    auto in = [&](int t, int d) { return t >= 0 && d >= 0 && t < nt && d < nd && region[g.index(t, d)]; };
    for (int t = 0; t < nt; ++t)
        for (int d = 0; d < nd; ++d) {
            if (!in(t, d)) continue;
            int x0 = t * px, y0 = (nd - 1 - d) * px;
            if (!in(t - 1, d)) svg << "M" << x0 << " " << y0 << "v" << px;
            if (!in(t + 1, d)) svg << "M" << x0 + px << " " << y0 << "v" << px;
            if (!in(t, d + 1)) svg << "M" << x0 << " " << y0 << "h" << px;
            if (!in(t, d - 1)) svg << "M" << x0 << " " << y0 + px << "h" << px;
        }
    svg << "\"/>\n";
    if (opt.marker) {
        const auto& tv = g.grid.temperature.values;
        const auto& dv = g.grid.delta.values;
        double step_t = nt > 1 ? tv[1] - tv[0] : 1.0, step_d = nd > 1 ? dv[1] - dv[0] : 1.0;
        double x = (opt.marker->temperature - tv[0]) / step_t * px + px / 2.0;
        double y = (nd - 1 - (opt.marker->delta - dv[0]) / step_d) * px + px / 2.0;
        svg << "<path stroke=\"yellow\" stroke-width=\"2\" d=\"M" << x - 5 << " " << y - 5 << "L" << x + 5 << " "
            << y + 5 << "M" << x - 5 << " " << y + 5 << "L" << x + 5 << " " << y - 5 << "\"/>\n";
    }
    svg << "</g>\n";
    svg << "<text x=\"" << margin + w / 2 << "\" y=\"" << h + margin + 30 << "\" font-size=\"12\">T</text>\n";
    svg << "<text x=\"15\" y=\"" << margin + h / 2 << "\" font-size=\"12\">&#916;</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace kzfreeze
