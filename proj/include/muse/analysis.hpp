#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "muse/backends.hpp"

namespace muse::analysis {

struct PosCell {
    double ref_count = 0;
    double gen_count = 0;
    double difference = 0;   // avg |G\R| + |R\G| (symmetric multiset difference)
    double overlap = 0;      // avg multiset intersection
    double overlap_syn = 0;  // overlap after synonym matching of leftovers
};

struct PosTable {
    // tag -> slice ("overall"/"ocr"/"non_ocr") -> cell
    std::map<PosTag, std::map<std::string, PosCell>> cells;
    std::vector<std::string> notes;
};

// is_ocr may be empty (overall slice only) or one flag per pair.
PosTable pos_overlap_table(const std::vector<std::string>& gens, const std::vector<std::string>& refs,
                           const std::vector<bool>& is_ocr, const PosTagger& tagger,
                           const SynonymLexicon& synonyms);

enum class Adequacy { Justify, WeaklyJustify, Sri, Nri };

std::string adequacy_name(Adequacy a);
Adequacy parse_adequacy(const std::string& s);
double adequacy_value(Adequacy a);  // 1.0 / 0.66 / 0.33 / 0.0

struct Rating {
    std::string sample_id;
    std::string rater_id;
    Adequacy adequacy;
    double fluency;  // in [0,1]
};

struct RatingSet {
    std::vector<Rating> ratings;
    void add(Rating r);  // rejects duplicate (sample, rater) pairs and bad fluency
};

RatingSet load_ratings(const std::string& path);  // JSONL

double adequacy_score(const RatingSet& rs);  // mean of mapped values
double fluency_score(const RatingSet& rs);

// Majority vote per sample (ties toward the lower-adequacy category),
// then category percentages over samples.
std::map<Adequacy, double> adequacy_distribution(const RatingSet& rs);

// Fleiss (1971); requires the same rater count n >= 2 for every sample.
double fleiss_kappa(const RatingSet& rs);

}  // namespace muse::analysis
