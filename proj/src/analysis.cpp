#include "muse/analysis.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

#include "muse/vocab.hpp"

namespace muse::analysis {

using nlohmann::json;

namespace {

constexpr PosTag kTags[] = {PosTag::Noun, PosTag::Verb, PosTag::Adj, PosTag::Adv};

struct CellAccum {
    double ref_count = 0, gen_count = 0, difference = 0, overlap = 0, overlap_syn = 0;
    long long n = 0;
};

std::map<std::string, long long> tag_multiset(const std::vector<std::pair<std::string, PosTag>>& tagged,
                                              PosTag tag) {
    std::map<std::string, long long> out;
    for (const auto& [w, t] : tagged)
        if (t == tag) ++out[w];
    return out;
}

}  // namespace

PosTable pos_overlap_table(const std::vector<std::string>& gens, const std::vector<std::string>& refs,
                           const std::vector<bool>& is_ocr, const PosTagger& tagger,
                           const SynonymLexicon& synonyms) {
    if (gens.size() != refs.size())
        throw std::invalid_argument("pos_overlap_table: generation/reference count mismatch");
    if (!is_ocr.empty() && is_ocr.size() != gens.size())
        throw std::invalid_argument("pos_overlap_table: slice flags count mismatch");

    std::map<PosTag, std::map<std::string, CellAccum>> acc;
    for (size_t s = 0; s < gens.size(); ++s) {
        auto gen_tagged = tagger.tag(gens[s]);
        auto ref_tagged = tagger.tag(refs[s]);
        std::vector<std::string> slices{"overall"};
        if (!is_ocr.empty()) slices.push_back(is_ocr[s] ? "ocr" : "non_ocr");

        for (PosTag tag : kTags) {
            auto g = tag_multiset(gen_tagged, tag);
            auto r = tag_multiset(ref_tagged, tag);
            long long g_total = 0, r_total = 0, overlap = 0;
            for (const auto& [w, c] : g) g_total += c;
            for (const auto& [w, c] : r) r_total += c;
            auto g_left = g, r_left = r;
            for (const auto& [w, c] : g) {
                auto it = r.find(w);
                if (it == r.end()) continue;
                const long long m = std::min(c, it->second);
                overlap += m;
                g_left[w] -= m;
                r_left[w] -= m;
            }
            // synonym stage: unmatched gen words, left-to-right, each ref word
            // consumable once
            long long syn_extra = 0;
            for (const auto& [w, t] : gen_tagged) {
                if (t != tag) continue;
                auto git = g_left.find(w);
                if (git == g_left.end() || git->second <= 0) continue;
                for (auto& [rw, rc] : r_left) {
                    if (rc <= 0) continue;
                    if (synonyms.are_synonyms(w, rw, tag)) {
                        --git->second;
                        --rc;
                        ++syn_extra;
                        break;
                    }
                }
            }
            for (const auto& slice : slices) {
                auto& cell = acc[tag][slice];
                cell.ref_count += static_cast<double>(r_total);
                cell.gen_count += static_cast<double>(g_total);
                cell.overlap += static_cast<double>(overlap);
                cell.overlap_syn += static_cast<double>(overlap + syn_extra);
                cell.difference += static_cast<double>((g_total - overlap) + (r_total - overlap));
                ++cell.n;
            }
        }
    }

    PosTable out;
    for (const auto& [tag, slices] : acc) {
        for (const auto& [slice, a] : slices) {
            PosCell c;
            const double n = static_cast<double>(a.n);
            c.ref_count = a.ref_count / n;
            c.gen_count = a.gen_count / n;
            c.difference = a.difference / n;
            c.overlap = a.overlap / n;
            c.overlap_syn = a.overlap_syn / n;
            out.cells[tag][slice] = c;
        }
    }
    out.notes.push_back("difference = avg symmetric multiset difference |G\\R| + |R\\G|");
    return out;
}

std::string adequacy_name(Adequacy a) {
    switch (a) {
        case Adequacy::Justify: return "justify";
        case Adequacy::WeaklyJustify: return "weakly_justify";
        case Adequacy::Sri: return "sri";
        default: return "nri";
    }
}

Adequacy parse_adequacy(const std::string& s) {
    if (s == "justify") return Adequacy::Justify;
    if (s == "weakly_justify") return Adequacy::WeaklyJustify;
    if (s == "sri") return Adequacy::Sri;
    if (s == "nri") return Adequacy::Nri;
    throw std::invalid_argument("unknown adequacy category: " + s);
}

double adequacy_value(Adequacy a) {
    switch (a) {
        case Adequacy::Justify: return 1.0;
        case Adequacy::WeaklyJustify: return 0.66;
        case Adequacy::Sri: return 0.33;
        default: return 0.0;
    }
}

void RatingSet::add(Rating r) {
    if (r.fluency < 0.0 || r.fluency > 1.0)
        throw std::invalid_argument("fluency must be in [0,1] for sample " + r.sample_id);
    for (const auto& existing : ratings)
        if (existing.sample_id == r.sample_id && existing.rater_id == r.rater_id)
            throw std::invalid_argument("duplicate rating for (" + r.sample_id + ", " + r.rater_id + ")");
    ratings.push_back(std::move(r));
}

RatingSet load_ratings(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open ratings file: " + path);
    RatingSet rs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::invalid_argument("ratings line " + std::to_string(line_no) + ": " + e.what());
        }
        Rating r;
        r.sample_id = j.at("sample_id").get<std::string>();
        r.rater_id = j.at("rater_id").get<std::string>();
        r.adequacy = parse_adequacy(j.at("adequacy").get<std::string>());
        r.fluency = j.at("fluency").get<double>();
        rs.add(std::move(r));
    }
    return rs;
}

double adequacy_score(const RatingSet& rs) {
    if (rs.ratings.empty()) throw std::invalid_argument("adequacy_score: empty rating set");
    double sum = 0;
    for (const auto& r : rs.ratings) sum += adequacy_value(r.adequacy);
    return sum / static_cast<double>(rs.ratings.size());
}

double fluency_score(const RatingSet& rs) {
    if (rs.ratings.empty()) throw std::invalid_argument("fluency_score: empty rating set");
    double sum = 0;
    for (const auto& r : rs.ratings) sum += r.fluency;
    return sum / static_cast<double>(rs.ratings.size());
}

std::map<Adequacy, double> adequacy_distribution(const RatingSet& rs) {
    std::map<std::string, std::map<Adequacy, long long>> votes;
    for (const auto& r : rs.ratings) ++votes[r.sample_id][r.adequacy];

    std::map<Adequacy, long long> winners;
    for (const auto& [sid, counts] : votes) {
        // ties broken toward the lower-adequacy category
        Adequacy best = Adequacy::Nri;
        long long best_n = -1;
        for (Adequacy a : {Adequacy::Nri, Adequacy::Sri, Adequacy::WeaklyJustify, Adequacy::Justify}) {
            auto it = counts.find(a);
            const long long n = it == counts.end() ? 0 : it->second;
            if (n > best_n) {
                best = a;
                best_n = n;
            }
        }
        ++winners[best];
    }
    std::map<Adequacy, double> out;
    const double total = static_cast<double>(votes.size());
    for (Adequacy a : {Adequacy::Justify, Adequacy::WeaklyJustify, Adequacy::Sri, Adequacy::Nri})
        out[a] = 100.0 * static_cast<double>(winners.count(a) ? winners[a] : 0) / total;
    return out;
}

double fleiss_kappa(const RatingSet& rs) {
    if (rs.ratings.empty()) throw std::invalid_argument("fleiss_kappa: empty rating set");
    std::map<std::string, std::map<Adequacy, long long>> table;
    for (const auto& r : rs.ratings) ++table[r.sample_id][r.adequacy];

    long long n = -1;
    for (const auto& [sid, counts] : table) {
        long long total = 0;
        for (const auto& [a, c] : counts) total += c;
        if (n < 0) n = total;
        if (total != n)
            throw std::invalid_argument("fleiss_kappa: sample \"" + sid + "\" has a different rater count");
    }
    if (n < 2) throw std::invalid_argument("fleiss_kappa: need at least 2 raters per sample");

    const double N = static_cast<double>(table.size());
    const double nn = static_cast<double>(n);
    double p_bar = 0;
    std::map<Adequacy, double> p_j;
    for (const auto& [sid, counts] : table) {
        double sq = 0;
        for (const auto& [a, c] : counts) {
            sq += static_cast<double>(c) * static_cast<double>(c);
            p_j[a] += static_cast<double>(c);
        }
        p_bar += (sq - nn) / (nn * (nn - 1.0));
    }
    p_bar /= N;
    double p_e = 0;
    for (auto& [a, c] : p_j) {
        const double p = c / (N * nn);
        p_e += p * p;
    }
    if (p_e >= 1.0 - 1e-12)
        throw std::invalid_argument("fleiss_kappa: undefined, all ratings in a single category");
    return (p_bar - p_e) / (1.0 - p_e);
}

}  // namespace muse::analysis
