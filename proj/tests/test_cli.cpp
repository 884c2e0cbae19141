#include <doctest.h>

#include <stdexcept>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "muse/cli.hpp"
#include "muse/config.hpp"

using namespace muse;
using namespace muse::cli;
using nlohmann::json;

namespace {

struct TempFile {
    std::string path;
    TempFile(const std::string& name, const std::string& content) : path(name) {
        std::ofstream f(path, std::ios::trunc);
        f << content;
    }
    explicit TempFile(const std::string& name) : path(name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

json read_json(const std::string& path) {
    std::ifstream f(path);
    return json::parse(f);
}

std::string feature_rows() {
    // q=2 regions, d_i=4
    return R"([[0.1,0.2,0.3,0.4],[-0.1,0.0,0.2,-0.3]])";
}

std::string dataset_jsonl() {
    std::ostringstream ss;
    auto line = [&](const std::string& id, const std::string& cap, const std::string& expl,
                    const std::string& split, int label, bool ocr) {
        ss << R"({"id":")" << id << R"(","caption":")" << cap << R"(","explanation":")" << expl
           << R"(","split":")" << split << R"(","label":)" << label
           << R"(,"image_features":)" << feature_rows();
        if (ocr) ss << R"(,"ocr_text":"big sale")";
        ss << "}\n";
    };
    line("a1", "great sunny day", "it is fine", "train", 1, false);
    line("a2", "bad rainy day", "it is poor", "train", 0, true);
    line("a3", "great warm view", "it is fine", "train", 1, false);
    line("a4", "bad cold night", "it is poor", "val", 0, false);
    line("a5", "great mild day", "it is fine", "test", 1, true);
    line("a6", "bad wet night", "it is poor", "test", 0, false);
    return ss.str();
}

const std::vector<std::string> kTinyModel{
    "--set", "model.d_t=8",        "--set", "model.heads=2",   "--set", "model.d_i=4",
    "--set", "model.q=2",          "--set", "model.max_len=6", "--set", "model.text_layers=0",
    "--set", "model.dec_layers=1", "--set", "model.max_decode_len=8"};

std::vector<std::string> with_tiny_model(std::vector<std::string> args) {
    args.insert(args.end(), kTinyModel.begin(), kTinyModel.end());
    return args;
}

}  // namespace

TEST_CASE("parse_toml: sections, scalars, arrays, comments") {
    TempFile f("cfg_probe.toml",
               "top = 1\n"
               "[train]\n"
               "epochs = 5  # trailing comment\n"
               "lr_lm_head = 0.0003\n"
               "early_stop = true\n"
               "freeze = [\"image_backend\", \"gate\"]\n"
               "[model]\n"
               "d_t = 64\n"
               "# full-line comment\n");
    auto entries = parse_toml(f.path);
    CHECK(entries.at("top") == "1");
    CHECK(entries.at("train.epochs") == "5");
    CHECK(entries.at("train.lr_lm_head") == "0.0003");
    CHECK(entries.at("train.early_stop") == "true");
    CHECK(entries.at("train.freeze") == "image_backend,gate");
    CHECK(entries.at("model.d_t") == "64");

    TempFile bad("cfg_bad.toml", "[train]\nno_equals_here\n");
    CHECK_THROWS_AS(parse_toml(bad.path), std::invalid_argument);
    TempFile unterminated("cfg_unterm.toml", "[train]\nname = \"oops\n");
    CHECK_THROWS_AS(parse_toml(unterminated.path), std::invalid_argument);
    CHECK_THROWS_AS(parse_toml("cfg_missing.toml"), std::invalid_argument);
}

TEST_CASE("apply_entries: typed keys and rejection of unknown ones") {
    RunConfig cfg;
    apply_entries(cfg, {{"train.epochs", "9"},
                        {"train.lr_encoder", "0.5"},
                        {"model.use_ocr_gate", "true"},
                        {"train.freeze", "gate,decoder"},
                        {"generate.strategy", "beam"},
                        {"generate.beam_width", "7"}});
    CHECK(cfg.train.epochs == 9);
    CHECK(cfg.train.lr_encoder == 0.5);
    CHECK(cfg.model.use_ocr_gate);
    CHECK(cfg.train.freeze == std::set<std::string>{"gate", "decoder"});
    CHECK(cfg.generation.strategy == model::GenerationConfig::Strategy::Beam);
    CHECK(cfg.generation.beam_width == 7);

    CHECK_THROWS_AS(apply_entries(cfg, {{"train.nope", "1"}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_entries(cfg, {{"train.epochs", "three"}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_entries(cfg, {{"train.early_stop", "yes"}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_entries(cfg, {{"generate.strategy", "sampled"}}), std::invalid_argument);
}

TEST_CASE("resolve_config: flags beat environment beats file") {
    TempFile f("cfg_layer.toml", "[train]\nepochs = 5\nbatch_size = 4\npatience = 2\n");
    setenv("MUSE_TRAIN__EPOCHS", "7", 1);
    setenv("MUSE_TRAIN__BATCH_SIZE", "8", 1);
    RunConfig cfg = resolve_config(f.path, {{"train.epochs", "9"}});
    unsetenv("MUSE_TRAIN__EPOCHS");
    unsetenv("MUSE_TRAIN__BATCH_SIZE");
    CHECK(cfg.train.epochs == 9);      // flag wins
    CHECK(cfg.train.batch_size == 8);  // env beats file
    CHECK(cfg.train.patience == 2);    // file only
}

TEST_CASE("env_overrides keys are lowercased section.key pairs") {
    setenv("MUSE_MODEL__D_T", "32", 1);
    auto env = env_overrides();
    unsetenv("MUSE_MODEL__D_T");
    CHECK(env.at("model.d_t") == "32");
}

TEST_CASE("archive_config writes the resolved configuration") {
    RunConfig cfg;
    cfg.train.epochs = 42;
    TempFile out("run_output.bin", "");
    TempFile archived("run_output.bin.config.json");
    archive_config(cfg, out.path);
    json j = read_json(archived.path);
    CHECK(j.at("train").at("epochs") == 42);
    CHECK(j.contains("model"));
    CHECK(j.contains("generate"));
}

TEST_CASE("dispatch ingest: stats outputs and exit codes") {
    TempFile data("cli_data.jsonl", dataset_jsonl());
    TempFile stats("cli_stats.json");
    TempFile table("cli_stats.txt");
    TempFile vocab("cli_vocab.txt");
    TempFile excl("cli_excl.json");

    int rc = dispatch({"ingest", "--data", data.path, "--stats-out", stats.path, "--table-out",
                       table.path, "--vocab-out", vocab.path, "--validate-out", excl.path});
    CHECK(rc == 0);
    json j = read_json(stats.path);
    CHECK(j.at("ocr_samples") == 2);
    CHECK(j.at("non_ocr_samples") == 4);
    CHECK(file_exists(table.path));
    CHECK(file_exists(vocab.path));
    CHECK(read_json(excl.path).contains("explicit_marker_ids"));

    CHECK(dispatch({"ingest", "--data", "missing.jsonl"}) == 2);  // unreadable file
    TempFile broken("cli_broken.jsonl", "not json\n");
    CHECK(dispatch({"ingest", "--data", broken.path}) == 1);
    CHECK(dispatch({"no-such-command"}) == 1);
}

TEST_CASE("dispatch: pretrain, train, generate, evaluate, analyze-pos chain") {
    TempFile data("cli_chain.jsonl", dataset_jsonl());
    TempFile pre_ckpt("cli_pre.ckpt");
    TempFile pre_cfg("cli_pre.ckpt.config.json");
    TempFile ckpt("cli_fine.ckpt");
    TempFile ckpt_cfg("cli_fine.ckpt.config.json");
    TempFile gens("cli_gens.jsonl");
    TempFile gens_cfg("cli_gens.jsonl.config.json");
    TempFile report("cli_report.json");
    TempFile table("cli_report.txt");
    TempFile pos_report("cli_pos.json");
    TempFile pos_table("cli_pos.txt");

    int rc = dispatch(with_tiny_model({"pretrain", "--data", data.path, "--out", pre_ckpt.path,
                                       "--epochs", "2", "--set", "train.batch_size=2"}));
    REQUIRE(rc == 0);
    CHECK(file_exists(pre_cfg.path));

    rc = dispatch(with_tiny_model({"train", "--data", data.path, "--out", ckpt.path, "--init",
                                   pre_ckpt.path, "--epochs", "2", "--set", "train.batch_size=2"}));
    REQUIRE(rc == 0);
    CHECK(file_exists(ckpt.path));
    json archived = read_json(ckpt_cfg.path);
    CHECK(archived.at("train").at("epochs") == 2);
    CHECK(archived.at("model").at("vocab_size").get<int>() > 4);

    rc = dispatch({"generate", "--ckpt", ckpt.path, "--data", data.path, "--out", gens.path,
                   "--split", "test"});
    REQUIRE(rc == 0);
    std::ifstream gf(gens.path);
    std::string line;
    int lines = 0;
    while (std::getline(gf, line)) {
        json j = json::parse(line);
        CHECK(j.contains("id"));
        CHECK(j.contains("generation"));
        ++lines;
    }
    CHECK(lines == 2);  // two test-split samples

    rc = dispatch({"evaluate", "--gens", gens.path, "--data", data.path, "--report", report.path,
                   "--table", table.path});
    REQUIRE(rc == 0);
    json rep = read_json(report.path);
    CHECK(rep.contains("overall"));
    CHECK(file_exists(table.path));

    rc = dispatch({"analyze-pos", "--gens", gens.path, "--data", data.path, "--report",
                   pos_report.path, "--table", pos_table.path});
    REQUIRE(rc == 0);
    CHECK(file_exists(pos_report.path));
    CHECK(file_exists(pos_table.path));

    // runtime failure: unreadable checkpoint
    CHECK(dispatch({"generate", "--ckpt", "missing.ckpt", "--data", data.path, "--out",
                    gens.path}) == 2);
    // validation failure: unknown config key
    CHECK(dispatch(with_tiny_model({"train", "--data", data.path, "--out", ckpt.path, "--set",
                                    "train.bogus=1"})) == 1);
    // validation failure: bad strategy
    CHECK(dispatch({"generate", "--ckpt", ckpt.path, "--data", data.path, "--out", gens.path,
                    "--strategy", "sampled"}) == 1);
}

TEST_CASE("dispatch rater-agreement") {
    TempFile ratings("cli_ratings.jsonl",
                     R"({"sample_id":"s1","rater_id":"r1","adequacy":"justify","fluency":0.9})"
                     "\n"
                     R"({"sample_id":"s1","rater_id":"r2","adequacy":"justify","fluency":0.8})"
                     "\n"
                     R"({"sample_id":"s2","rater_id":"r1","adequacy":"nri","fluency":0.2})"
                     "\n"
                     R"({"sample_id":"s2","rater_id":"r2","adequacy":"nri","fluency":0.1})"
                     "\n");
    TempFile report("cli_ratings_report.json");
    int rc = dispatch({"rater-agreement", "--ratings", ratings.path, "--report", report.path});
    REQUIRE(rc == 0);
    json j = read_json(report.path);
    CHECK(j.at("fleiss_kappa").get<double>() == doctest::Approx(1.0));
    CHECK(j.contains("adequacy_score"));
    CHECK(j.contains("fluency_score"));
    CHECK(j.contains("adequacy_distribution_pct"));

    CHECK(dispatch({"rater-agreement", "--ratings", "missing.jsonl"}) == 1);
}
