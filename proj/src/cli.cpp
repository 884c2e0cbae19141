#include "muse/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "muse/analysis.hpp"
#include "muse/config.hpp"
#include "muse/data.hpp"
#include "muse/metrics.hpp"
#include "muse/model.hpp"
#include "muse/reports.hpp"
#include "muse/training.hpp"

namespace muse::cli {

using nlohmann::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::map<std::string, std::string> flag_overrides;
};

void add_config_flags(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "TOML configuration file");
    cmd->add_option("--set", [&opts](const std::vector<std::string>& vals) {
        for (const auto& kv : vals) {
            auto eq = kv.find('=');
            if (eq == std::string::npos) return false;
            opts.flag_overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
        }
        return true;
    }, "Override a config key (section.key=value), repeatable")->take_all();
}

SplitRatios parse_ratios(const std::string& s) {
    SplitRatios r;
    std::stringstream ss(s);
    std::string item;
    std::vector<double> vals;
    while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
    if (vals.size() != 3) throw std::invalid_argument("--ratios expects three comma-separated values");
    r.train = vals[0];
    r.val = vals[1];
    r.test = vals[2];
    return r;
}

void ensure_splits(Dataset& ds, bool resplit, unsigned seed, const SplitRatios& ratios) {
    bool any_unassigned = false;
    for (const auto& s : ds.samples)
        if (s.split == Split::Unassigned) any_unassigned = true;
    if (resplit || any_unassigned) split_dataset(ds, ratios, seed, resplit);
}

std::vector<metrics::Generation> load_generations(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open generations file: " + path);
    std::vector<metrics::Generation> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::invalid_argument("generations line " + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back({j.at("id").get<std::string>(), j.at("generation").get<std::string>()});
    }
    return out;
}

Split parse_split_flag(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("--split expects train|val|test|all");
}

void mark_all_as(Dataset& ds, Split split) {
    for (auto& s : ds.samples) s.split = split;
}

int cmd_ingest(const std::string& data, const std::string& stats_out, const std::string& table_out,
               const std::string& vocab_out, const std::string& validate_out, bool resplit,
               unsigned seed, const std::string& ratios_str) {
    Dataset ds = load_dataset(data);
    if (!ds.samples.empty()) ensure_splits(ds, resplit, seed, parse_ratios(ratios_str));
    StatsTable stats = compute_stats(ds);

    long long ocr = 0;
    for (const auto& s : ds.samples)
        if (s.is_ocr_sample) ++ocr;
    json j = reports::stats_to_json(stats);
    j["ocr_samples"] = ocr;
    j["non_ocr_samples"] = static_cast<long long>(ds.samples.size()) - ocr;

    if (!stats_out.empty()) reports::write_json(stats_out, j);
    if (!table_out.empty()) reports::write_text(table_out, reports::stats_table(stats));
    if (!vocab_out.empty()) build_vocabulary(ds).save(vocab_out);
    if (!validate_out.empty())
        reports::write_json(validate_out, reports::exclusion_report_to_json(validate_exclusions(ds)));
    std::cout << reports::stats_table(stats);
    std::cout << "OCR samples: " << ocr << "  non-OCR: " << ds.samples.size() - ocr << '\n';
    return 0;
}

}  // namespace

int dispatch(std::vector<std::string> argv) {
    CLI::App app{"MuSE pipeline: multimodal sarcasm explanation at desk scale"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Load, validate, split and summarize a dataset");
    std::string in_data, in_stats, in_table, in_vocab, in_validate, in_ratios = "0.85,0.05,0.10";
    bool in_resplit = false;
    unsigned in_seed = 13;
    ingest->add_option("--data", in_data, "JSONL dataset")->required();
    ingest->add_option("--stats-out", in_stats, "Stats JSON output");
    ingest->add_option("--table-out", in_table, "Stats text table output");
    ingest->add_option("--vocab-out", in_vocab, "Write the train-split vocabulary");
    ingest->add_option("--validate-out", in_validate, "Exclusion-rule report JSON");
    ingest->add_flag("--resplit", in_resplit, "Discard pre-assigned splits");
    ingest->add_option("--seed", in_seed, "Split shuffle seed");
    ingest->add_option("--ratios", in_ratios, "train,val,test ratios");

    // pretrain / train
    auto* pre = app.add_subcommand("pretrain", "Sarcasm-classification pretraining");
    auto* tr = app.add_subcommand("train", "Explanation-generation fine-tuning");
    struct TrainArgs {
        CommonOpts common;
        std::string data, out, init;
        bool resplit = false;
        std::string ratios = "0.85,0.05,0.10";
        int seed = -1, epochs = -1;
    } pre_args, tr_args;
    for (auto& [cmd, args] : {std::pair{pre, &pre_args}, std::pair{tr, &tr_args}}) {
        cmd->add_option("--data", args->data, "JSONL dataset")->required();
        cmd->add_option("--out", args->out, "Checkpoint output path")->required();
        cmd->add_option("--seed", args->seed, "Training seed (overrides config)");
        cmd->add_option("--epochs", args->epochs, "Epoch count (overrides config)");
        cmd->add_flag("--resplit", args->resplit, "Discard pre-assigned splits");
        cmd->add_option("--ratios", args->ratios, "train,val,test ratios");
        add_config_flags(cmd, args->common);
    }
    tr->add_option("--init", tr_args.init, "Warm-start or resume from this checkpoint");

    // generate
    auto* gen = app.add_subcommand("generate", "Generate explanations with a trained checkpoint");
    std::string g_ckpt, g_data, g_out, g_split = "test", g_strategy;
    int g_beam = -1;
    CommonOpts g_common;
    gen->add_option("--ckpt", g_ckpt, "Checkpoint")->required();
    gen->add_option("--data", g_data, "JSONL dataset")->required();
    gen->add_option("--out", g_out, "Generations JSONL output")->required();
    gen->add_option("--split", g_split, "train|val|test|all");
    gen->add_option("--strategy", g_strategy, "greedy|beam");
    gen->add_option("--beam-width", g_beam, "Beam width");
    add_config_flags(gen, g_common);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Metric suite over generations");
    std::string e_gens, e_data, e_report, e_table, e_split = "test";
    ev->add_option("--gens", e_gens, "Generations JSONL")->required();
    ev->add_option("--data", e_data, "JSONL dataset with references")->required();
    ev->add_option("--report", e_report, "Report JSON output");
    ev->add_option("--table", e_table, "Report text table output");
    ev->add_option("--split", e_split, "train|val|test|all");

    // analyze-pos
    auto* ap = app.add_subcommand("analyze-pos", "POS overlap analysis of generations");
    std::string a_gens, a_data, a_report, a_table, a_split = "test", a_poslex, a_syn;
    ap->add_option("--gens", a_gens, "Generations JSONL")->required();
    ap->add_option("--data", a_data, "JSONL dataset with references")->required();
    ap->add_option("--report", a_report, "Report JSON output");
    ap->add_option("--table", a_table, "Text table output");
    ap->add_option("--split", a_split, "train|val|test|all");
    ap->add_option("--pos-lexicon", a_poslex, "Extra POS lexicon (word<TAB>tag)");
    ap->add_option("--synonyms", a_syn, "Extra synonym lexicon (tag<TAB>word1<TAB>word2)");

    // rater-agreement
    auto* ra = app.add_subcommand("rater-agreement", "Human-evaluation aggregation");
    std::string r_ratings, r_report;
    ra->add_option("--ratings", r_ratings, "Ratings JSONL")->required();
    ra->add_option("--report", r_report, "Report JSON output");

    std::vector<const char*> cargs;
    cargs.push_back("muse");
    for (const auto& a : argv) cargs.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*ingest)
            return cmd_ingest(in_data, in_stats, in_table, in_vocab, in_validate, in_resplit, in_seed,
                              in_ratios);

        if (*pre || *tr) {
            TrainArgs& args = *pre ? pre_args : tr_args;
            RunConfig cfg = resolve_config(args.common.config_path, args.common.flag_overrides);
            if (args.seed >= 0) cfg.train.seed = static_cast<unsigned>(args.seed);
            if (args.epochs >= 0) cfg.train.epochs = args.epochs;
            cfg.train.phase = *pre ? train::Phase::Pretrain : train::Phase::Finetune;

            Dataset ds = load_dataset(args.data);
            ensure_splits(ds, args.resplit, cfg.train.seed, parse_ratios(args.ratios));

            train::Checkpoint init;
            const train::Checkpoint* init_ptr = nullptr;
            if (!args.init.empty()) {
                init = train::load_checkpoint(args.init);
                init_ptr = &init;
            }
            train::Checkpoint ckpt = *pre ? train::pretrain(ds, cfg.train, cfg.model)
                                          : train::finetune(ds, cfg.train, cfg.model, init_ptr);
            train::save_checkpoint(ckpt, args.out);
            cfg.model.vocab_size = ckpt.model_cfg.vocab_size;
            archive_config(cfg, args.out);
            std::cout << "epochs: " << ckpt.epoch << "  best monitored loss: " << ckpt.best_val_loss
                      << "\ncheckpoint: " << args.out << '\n';
            return 0;
        }

        if (*gen) {
            RunConfig cfg = resolve_config(g_common.config_path, g_common.flag_overrides);
            if (!g_strategy.empty()) {
                if (g_strategy == "greedy") cfg.generation.strategy = model::GenerationConfig::Strategy::Greedy;
                else if (g_strategy == "beam") cfg.generation.strategy = model::GenerationConfig::Strategy::Beam;
                else throw std::invalid_argument("--strategy expects greedy|beam");
            }
            if (g_beam > 0) cfg.generation.beam_width = g_beam;

            train::Checkpoint ckpt = train::load_checkpoint(g_ckpt);
            model::Model mdl = train::restore_model(ckpt);
            Dataset ds = load_dataset(g_data);
            if (g_split == "all") mark_all_as(ds, Split::Test);
            const Split split = g_split == "all" ? Split::Test : parse_split_flag(g_split);

            std::ofstream out(g_out, std::ios::trunc);
            if (!out) throw std::runtime_error("cannot write " + g_out);
            for (const Sample* s : ds.in_split(split)) {
                auto enc = mdl.encode_sample(*s, ckpt.vocab);
                auto ids = model::generate(mdl, enc, cfg.generation);
                TokenSeq seq;
                seq.ids = ids;
                seq.ids.push_back(Vocabulary::kEos);
                seq.length_unpadded = static_cast<int>(seq.ids.size());
                json j = {{"id", s->id}, {"generation", decode(seq, ckpt.vocab)}};
                out << j.dump() << '\n';
            }
            archive_config(cfg, g_out);
            return 0;
        }

        if (*ev) {
            Dataset ds = load_dataset(e_data);
            if (e_split == "all") mark_all_as(ds, Split::Test);
            const Split split = e_split == "all" ? Split::Test : parse_split_flag(e_split);
            auto rep = metrics::evaluate_corpus(load_generations(e_gens), ds, split);
            if (!e_report.empty()) reports::write_json(e_report, reports::metric_report_to_json(rep));
            if (!e_table.empty()) reports::write_text(e_table, reports::metric_report_table(rep));
            std::cout << reports::metric_report_table(rep);
            return 0;
        }

        if (*ap) {
            Dataset ds = load_dataset(a_data);
            if (a_split == "all") mark_all_as(ds, Split::Test);
            const Split split = a_split == "all" ? Split::Test : parse_split_flag(a_split);
            auto gens = load_generations(a_gens);
            std::map<std::string, std::string> by_id;
            for (const auto& g : gens) by_id[g.id] = g.text;

            std::vector<std::string> gtexts, rtexts;
            std::vector<bool> is_ocr;
            for (const Sample* s : ds.in_split(split)) {
                auto it = by_id.find(s->id);
                if (it == by_id.end())
                    throw std::invalid_argument("no generation for sample \"" + s->id + "\"");
                gtexts.push_back(it->second);
                rtexts.push_back(s->explanation);
                is_ocr.push_back(s->is_ocr_sample);
            }
            PosTagger tagger;
            if (!a_poslex.empty()) tagger.load_lexicon(a_poslex);
            SynonymLexicon syn;
            if (!a_syn.empty()) syn.load(a_syn);
            auto table = analysis::pos_overlap_table(gtexts, rtexts, is_ocr, tagger, syn);
            if (!a_report.empty()) reports::write_json(a_report, reports::pos_table_to_json(table));
            if (!a_table.empty()) reports::write_text(a_table, reports::pos_table_text(table));
            std::cout << reports::pos_table_text(table);
            return 0;
        }

        if (*ra) {
            auto rs = analysis::load_ratings(r_ratings);
            json j = reports::ratings_report_to_json(rs);
            if (!r_report.empty()) reports::write_json(r_report, j);
            std::cout << j.dump(2) << '\n';
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace muse::cli
