#include <doctest.h>

#include <cstdlib>
#include <regex>
#include <sstream>
#include <sys/wait.h>

#include "stancegen/commands.hpp"
#include "stancegen/errors.hpp"
#include "../support/fake_semeval.hpp"

using namespace stancegen;
namespace fs = std::filesystem;
using testsupport::slurp;

namespace {

RunConfig small_config(const fs::path& dir, const fs::path& corpus) {
  std::istringstream in("# tiny run\n"
                        "data_files = " + corpus.string() + "\n"
                        "embeddings = fallback\n"
                        "count_check = false\n"
                        "embed_dim = 6\n"
                        "hidden_dim = 4\n"
                        "max_epochs = 3\n"
                        "batch_size = 8\n"
                        "threads = 1\n"
                        "out_dir = " + (dir / "run").string() + "\n");
  return parse_config(in, "tiny.cfg");
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  const auto log = fs::temp_directory_path() / "stancegen_cli_out.txt";
  const std::string cmd = std::string(STANCEGEN_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  std::istringstream in("variant = BCA\nlambda=0.5\nseeds = 1, 2,3\n# note\n\nprecision=float64\n");
  auto cfg = parse_config(in);
  CHECK(cfg.variant == Variant::BCA);
  CHECK(cfg.hp.lambda == 0.5);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(cfg.precision == Precision::Float64);

  std::istringstream unknown("variant=BCA\ncolour=blue\n");
  try {
    parse_config(unknown, "x.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("x.cfg:2") != std::string::npos);
  }
  std::istringstream bad_num("lambda=abc\n");
  CHECK_THROWS_AS(parse_config(bad_num), ConfigError);
  std::istringstream no_eq("lambda\n");
  CHECK_THROWS_AS(parse_config(no_eq), ConfigError);
  CHECK_THROWS_AS(parse_seed_list(""), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent.cfg"), ConfigError);
}

TEST_CASE("median and summary") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  std::vector<SeedResult> rs{{1, 0.5, 0.4, 3}, {2, 0.7, 0.2, 5}, {3, 0.6, 0.3, 4}};
  const auto s = format_summary(rs);
  CHECK(s.find("median\tdev=0.6000\ttest=0.3000\tseeds=3") != std::string::npos);
}

TEST_CASE("finalize") {
  const auto dir = testsupport::scratch_dir("finalize");
  const auto corpus = testsupport::write_fake_semeval(dir);
  SUBCASE("missing embeddings path is a config error") {
    auto cfg = small_config(dir, corpus);
    cfg.embeddings = (dir / "nope.txt").string();
    CHECK_THROWS_AS(cfg.finalize(), ConfigError);
    std::ostringstream out, err;
    CHECK(cmd_train(cfg, out, err) == kExitConfig);
  }
  SUBCASE("data directory fallback from the environment") {
    auto cfg = small_config(dir, corpus);
    cfg.data_files.clear();
    cfg.data_dir.clear();
    ::setenv("STANCEGEN_DATA_DIR", dir.c_str(), 1);
    cfg.finalize();
    ::unsetenv("STANCEGEN_DATA_DIR");
    REQUIRE(cfg.data_files.size() == 1);
    CHECK(fs::path(cfg.data_files[0]) == corpus);
  }
  SUBCASE("missing data file") {
    auto cfg = small_config(dir, dir / "absent.tsv");
    std::ostringstream out, err;
    CHECK(cmd_train(cfg, out, err) == kExitConfig);
  }
  SUBCASE("unparseable data is a data error") {
    testsupport::write_text(dir / "bad.tsv", "ID\tTarget\tTweet\tStance\n1\tAtheism\tonly three\n");
    auto cfg = small_config(dir, dir / "bad.tsv");
    std::ostringstream out, err;
    CHECK(cmd_train(cfg, out, err) == kExitData);
    CHECK(err.str().find("bad.tsv:2") != std::string::npos);
  }
  SUBCASE("split counts are enforced unless disabled") {
    auto cfg = small_config(dir, corpus);
    cfg.count_check = true;
    std::ostringstream out, err;
    CHECK(cmd_train(cfg, out, err) == kExitData);
  }
  fs::remove_all(dir);
}

TEST_CASE("train, eval, predict, dump-attention") {
  const auto dir = testsupport::scratch_dir("commands");
  const auto corpus = testsupport::write_fake_semeval(dir);
  auto cfg = small_config(dir, corpus);
  cfg.seeds = {1, 2, 3, 4, 5};
  std::ostringstream out, err;
  REQUIRE(cmd_train(cfg, out, err) == kExitOk);
  const auto run = dir / "run";

  for (int s = 1; s <= 5; ++s) CHECK(fs::exists(run / ("seed_" + std::to_string(s)) / "model.ckpt"));
  const auto summary = slurp(run / "summary.txt");
  CHECK(summary.find("median\t") != std::string::npos);
  CHECK(summary.find("seeds=5") != std::string::npos);
  const auto metrics = slurp(run / "seed_1" / "metrics.txt");
  CHECK(metrics.find("[test]") != std::string::npos);
  CHECK(metrics.find("Macro=") != std::string::npos);

  const auto ckpt = run / "seed_1" / "model.ckpt";

  SUBCASE("eval on dev matches the best epoch of the training log") {
    EvalRequest req;
    req.checkpoint = ckpt;
    req.config = cfg;
    req.split = "dev";
    req.threads = 1;
    std::ostringstream eo, ee;
    REQUIRE(cmd_eval(req, eo, ee) == kExitOk);
    std::smatch m;
    const auto text = eo.str();
    REQUIRE(std::regex_search(text, m, std::regex("Macro=([0-9.]+)")));
    const double eval_macro = std::stod(m[1]);

    // Best epoch = first epoch with the maximum dev macro-F1.
    std::istringstream log(slurp(run / "seed_1" / "train_log.tsv"));
    double best = -1;
    for (std::string line; std::getline(log, line);) {
      std::vector<std::string> cols;
      std::stringstream ls(line);
      for (std::string c; std::getline(ls, c, '\t');) cols.push_back(c);
      if (cols.size() == 4 && std::isdigit(static_cast<unsigned char>(cols[0][0]))) {
        best = std::max(best, std::stod(cols[3]));
      }
    }
    CHECK(eval_macro == doctest::Approx(best).epsilon(1e-4));
  }
  SUBCASE("eval on a data file") {
    EvalRequest req;
    req.checkpoint = ckpt;
    req.data_files = {corpus};
    std::ostringstream eo, ee;
    CHECK(cmd_eval(req, eo, ee) == kExitOk);
    CHECK(eo.str().find("N=72") != std::string::npos);
  }
  SUBCASE("corrupted checkpoint") {
    auto bytes = slurp(ckpt);
    bytes[bytes.size() / 2] ^= 0x11;
    testsupport::write_text(dir / "bad.ckpt", bytes);
    EvalRequest req;
    req.checkpoint = dir / "bad.ckpt";
    req.data_files = {corpus};
    std::ostringstream eo, ee;
    CHECK(cmd_eval(req, eo, ee) == kExitCheckpoint);
  }
  SUBCASE("vocabulary mismatch") {
    const auto other = testsupport::scratch_dir("commands_other");
    auto other_cfg = small_config(other, testsupport::write_fake_semeval(other, 9, 77));
    EvalRequest req;
    req.checkpoint = ckpt;
    req.config = other_cfg;
    std::ostringstream eo, ee;
    CHECK(cmd_eval(req, eo, ee) == kExitCheckpoint);
    CHECK(ee.str().find("vocabulary") != std::string::npos);
    fs::remove_all(other);
  }
  SUBCASE("empty dataset") {
    testsupport::write_text(dir / "empty.tsv", "ID\tTarget\tTweet\tStance\n");
    EvalRequest req;
    req.checkpoint = ckpt;
    req.data_files = {dir / "empty.tsv"};
    std::ostringstream eo, ee;
    CHECK(cmd_eval(req, eo, ee) == kExitData);
  }
  SUBCASE("predict") {
    std::ostringstream po, pe;
    CHECK(cmd_predict(ckpt, "Donald Trump", "I really love the news", po, pe) == kExitOk);
    CHECK(po.str().find("stance=") == 0);
    CHECK(po.str().find("p.FAVOR=") != std::string::npos);
  }
  SUBCASE("dump-attention creates its output directory") {
    EvalRequest req;
    req.checkpoint = ckpt;
    req.config = cfg;
    req.split = "test";
    std::ostringstream o, e;
    const auto target = dir / "nested" / "attn";
    CHECK(cmd_dump_attention(req, target, o, e) == kExitOk);
    std::istringstream lines(slurp(target / "attention.jsonl"));
    std::size_t n = 0;
    for (std::string l; std::getline(lines, l);) ++n;
    CHECK(n == 12);
    CHECK(fs::exists(target / "attention.html"));
  }
  SUBCASE("dump-attention on a Concat checkpoint") {
    auto ccfg = cfg;
    ccfg.variant = Variant::Concat;
    ccfg.seeds = {1};
    ccfg.out_dir = dir / "concat";
    std::ostringstream o, e;
    REQUIRE(cmd_train(ccfg, o, e) == kExitOk);
    EvalRequest req;
    req.checkpoint = dir / "concat" / "seed_1" / "model.ckpt";
    req.data_files = {corpus};
    CHECK(cmd_dump_attention(req, dir / "attn2", o, e) == kExitCapability);
  }
  fs::remove_all(dir);
}

TEST_CASE("parallel seeds give the same results as sequential seeds") {
  const auto dir = testsupport::scratch_dir("parallel");
  const auto corpus = testsupport::write_fake_semeval(dir);
  auto cfg = small_config(dir, corpus);
  cfg.seeds = {4, 5};
  cfg.out_dir = dir / "seq";
  std::ostringstream o, e;
  REQUIRE(cmd_train(cfg, o, e) == kExitOk);
  cfg.out_dir = dir / "par";
  cfg.parallel_seeds = true;
  REQUIRE(cmd_train(cfg, o, e) == kExitOk);
  for (const char* s : {"seed_4", "seed_5"}) {
    CHECK(slurp(dir / "seq" / s / "train_log.tsv") == slurp(dir / "par" / s / "train_log.tsv"));
    CHECK(slurp(dir / "seq" / s / "model.ckpt") == slurp(dir / "par" / s / "model.ckpt"));
  }
  CHECK(slurp(dir / "seq" / "summary.txt") == slurp(dir / "par" / "summary.txt"));
  fs::remove_all(dir);
}

TEST_CASE("gradcheck command") {
  std::ostringstream out, err;
  CHECK(cmd_gradcheck(out, err) == kExitOk);
  std::ostringstream out2, err2;
  CHECK(cmd_gradcheck(out2, err2, "tanh") == kExitDiagnostic);
  CHECK(err2.str().find("tanh") != std::string::npos);
  // The fault is cleared afterwards.
  std::ostringstream out3, err3;
  CHECK(cmd_gradcheck(out3, err3) == kExitOk);
}

TEST_CASE("command-line front end") {
  std::string output;
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == kExitConfig);
  CHECK(run_cli("train --bogus-flag") == kExitConfig);
  CHECK(run_cli("train --variant NotAModel --no-count-check") == kExitConfig);
  CHECK(run_cli("eval --checkpoint /nonexistent.ckpt --data /nonexistent.tsv") == kExitCheckpoint);
  CHECK(run_cli("gradcheck --inject-fault tanh", &output) == kExitDiagnostic);
  CHECK(output.find("tanh") != std::string::npos);

  const auto dir = testsupport::scratch_dir("cli");
  const auto corpus = testsupport::write_fake_semeval(dir);
  testsupport::write_text(dir / "run.cfg", "data_files=" + corpus.string() +
                                               "\nembeddings=fallback\nembed_dim=6\nhidden_dim=3\n"
                                               "max_epochs=2\nthreads=1\n");
  const std::string base = "train --config " + (dir / "run.cfg").string() + " --out-dir " +
                           (dir / "out").string();
  CHECK(run_cli(base, &output) == kExitData);  // counts differ from the official split
  CHECK(run_cli(base + " --no-count-check --seeds 1,2 --variant BCA --lambda 0.2", &output) == kExitOk);
  CHECK(fs::exists(dir / "out" / "seed_2" / "model.ckpt"));
  CHECK(run_cli("predict -c " + (dir / "out" / "seed_1" / "model.ckpt").string() +
                    " --target Trump --text 'love it'",
                &output) == kExitOk);
  CHECK(output.find("stance=") != std::string::npos);
  fs::remove_all(dir);
}
