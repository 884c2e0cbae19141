#include "muse/reports.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace muse::reports {

using nlohmann::json;

namespace {

std::string fmt2(double score_01) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << score_01 * 100.0;
    return ss.str();
}

std::string pad(const std::string& s, size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

json slice_to_json(const metrics::SliceScores& s) {
    return json{{"count", s.count},     {"B1", s.b1},         {"B2", s.b2},
                {"B3", s.b3},           {"B4", s.b4},         {"R1", s.r1},
                {"R2", s.r2},           {"RL", s.rl},         {"METEOR", s.meteor},
                {"emb_P", s.emb_p},     {"emb_R", s.emb_r},   {"emb_F1", s.emb_f1},
                {"sent_cosine", s.sent_cosine}};
}

}  // namespace

json metric_report_to_json(const metrics::MetricReport& rep) {
    json j;
    if (rep.overall) j["overall"] = slice_to_json(*rep.overall);
    if (rep.ocr) j["ocr"] = slice_to_json(*rep.ocr);
    if (rep.non_ocr) j["non_ocr"] = slice_to_json(*rep.non_ocr);
    j["notes"] = rep.notes;
    return j;
}

std::string metric_report_table(const metrics::MetricReport& rep) {
    std::ostringstream os;
    os << pad("Slice", 10) << pad("N", 6);
    for (const char* c : {"B1", "B2", "B3", "B4", "R1", "R2", "RL", "METEOR", "Pre", "Rec", "F1", "Sent"})
        os << pad(c, 8);
    os << '\n';
    auto row = [&](const std::string& name, const metrics::SliceScores& s) {
        os << pad(name, 10) << pad(std::to_string(s.count), 6);
        for (double v : {s.b1, s.b2, s.b3, s.b4, s.r1, s.r2, s.rl, s.meteor, s.emb_p, s.emb_r, s.emb_f1,
                         s.sent_cosine})
            os << pad(fmt2(v), 8);
        os << '\n';
    };
    if (rep.non_ocr) row("non-OCR", *rep.non_ocr);
    if (rep.ocr) row("OCR", *rep.ocr);
    if (rep.overall) row("Complete", *rep.overall);
    for (const auto& n : rep.notes) os << "# " << n << '\n';
    return os.str();
}

namespace {

json split_stats_to_json(const SplitStats& s) {
    return json{{"count", s.count},
                {"avg_caption_len", s.avg_caption_len},
                {"caption_vocab", s.caption_vocab},
                {"avg_explanation_len", s.avg_explanation_len},
                {"explanation_vocab", s.explanation_vocab}};
}

}  // namespace

json stats_to_json(const StatsTable& t) {
    return json{{"train", split_stats_to_json(t.train)},
                {"val", split_stats_to_json(t.val)},
                {"test", split_stats_to_json(t.test)},
                {"total", split_stats_to_json(t.total)}};
}

std::string stats_table(const StatsTable& t) {
    std::ostringstream os;
    os << pad("Split", 8) << pad("#Samples", 10) << pad("AvgCapLen", 11) << pad("|V|(Cap)", 10)
       << pad("AvgExpLen", 11) << pad("|V|(Exp)", 10) << '\n';
    auto row = [&](const std::string& name, const SplitStats& s) {
        std::ostringstream c, e;
        c << std::fixed << std::setprecision(2) << s.avg_caption_len;
        e << std::fixed << std::setprecision(2) << s.avg_explanation_len;
        os << pad(name, 8) << pad(std::to_string(s.count), 10) << pad(c.str(), 11)
           << pad(std::to_string(s.caption_vocab), 10) << pad(e.str(), 11)
           << pad(std::to_string(s.explanation_vocab), 10) << '\n';
    };
    row("Train", t.train);
    row("Val", t.val);
    row("Test", t.test);
    row("Total", t.total);
    return os.str();
}

namespace {

json pos_cell_to_json(const analysis::PosCell& c) {
    return json{{"ref_count", c.ref_count},
                {"gen_count", c.gen_count},
                {"difference", c.difference},
                {"overlap", c.overlap},
                {"overlap_syn", c.overlap_syn}};
}

std::string fnum(double v) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << v;
    return ss.str();
}

}  // namespace

json pos_table_to_json(const analysis::PosTable& t) {
    json j;
    for (const auto& [tag, slices] : t.cells) {
        json s;
        for (const auto& [slice, cell] : slices) s[slice] = pos_cell_to_json(cell);
        j["tags"][pos_tag_name(tag)] = s;
    }
    j["notes"] = t.notes;
    return j;
}

std::string pos_table_text(const analysis::PosTable& t) {
    std::ostringstream os;
    static const char* kRows[] = {"Ref count", "Gen count", "Difference", "Overlap", "Overlap--Syn"};
    for (const auto& [tag, slices] : t.cells) {
        os << "[" << pos_tag_name(tag) << "]\n";
        os << pad("", 14);
        for (const auto& [slice, cell] : slices) os << pad(slice, 10);
        os << '\n';
        for (int r = 0; r < 5; ++r) {
            os << pad(kRows[r], 14);
            for (const auto& [slice, cell] : slices) {
                double v = r == 0 ? cell.ref_count
                           : r == 1 ? cell.gen_count
                           : r == 2 ? cell.difference
                           : r == 3 ? cell.overlap
                                    : cell.overlap_syn;
                os << pad(fnum(v), 10);
            }
            os << '\n';
        }
    }
    for (const auto& n : t.notes) os << "# " << n << '\n';
    return os.str();
}

json exclusion_report_to_json(const ExclusionReport& r) {
    return json{{"explicit_marker_ids", r.explicit_marker_ids}, {"empty_caption_ids", r.empty_caption_ids}};
}

json ratings_report_to_json(const analysis::RatingSet& rs) {
    json j;
    j["adequacy_score"] = analysis::adequacy_score(rs);
    j["fluency_score"] = analysis::fluency_score(rs);
    // per-sample majority means, emitted alongside the rater-sample mean
    auto dist = analysis::adequacy_distribution(rs);
    json d;
    double majority_mean = 0.0;
    for (const auto& [a, pct] : dist) {
        d[analysis::adequacy_name(a)] = pct;
        majority_mean += (pct / 100.0) * analysis::adequacy_value(a);
    }
    j["adequacy_distribution_pct"] = d;
    j["adequacy_majority_mean"] = majority_mean;
    const double kappa = analysis::fleiss_kappa(rs);
    j["fleiss_kappa"] = kappa;
    j["agreement_band"] = kappa < 0.0    ? "poor"
                          : kappa < 0.2  ? "slight"
                          : kappa < 0.4  ? "fair"
                          : kappa < 0.6  ? "moderate"
                          : kappa < 0.8  ? "substantial"
                                         : "almost perfect";
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << j.dump(2) << '\n';
}

}  // namespace muse::reports
