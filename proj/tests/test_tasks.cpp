#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "longreach/rng.hpp"
#include "longreach/tasks.hpp"
#include "longreach/tensor.hpp"

using namespace longreach;
namespace fs = std::filesystem;

namespace {

// Tables pinned so the worked composition t2(t1(000)) = t2(110) = 100
// from the task definition holds verbatim.
std::array<LookupTable, 6> fixture_tables() {
  Rng rng(7);
  auto tables = sample_tables(rng);
  tables[0].force_entry("000", "110");
  tables[1].force_entry("110", "100");
  return tables;
}

// Test-side oracle: recover (bits, table names) from the surface form of
// any variant and recompute the target from the table maps alone.
std::vector<std::string> oracle_target(const std::vector<std::string>& input,
                                       TaskVariant variant,
                                       std::span<const LookupTable> tables) {
  REQUIRE(input.back() == ".");
  std::string bits;
  std::vector<std::string> names;
  switch (variant) {
    case TaskVariant::Standard:
      bits = input.front();
      names.assign(input.begin() + 1, input.end() - 1);
      break;
    case TaskVariant::Reversed:
      bits = input[input.size() - 2];
      names.assign(input.begin(), input.end() - 2);
      std::reverse(names.begin(), names.end());
      break;
    case TaskVariant::NoisyStart: {
      bits = input.front();
      auto bang = std::find(input.begin(), input.end(), "!");
      REQUIRE(bang != input.end());
      names.assign(bang + 1, input.end() - 1);
      break;
    }
  }
  auto target = apply_tables(bits, names, tables);
  target.push_back("<eos>");
  return target;
}

void check_split_against_oracle(const std::vector<TaskExample>& split,
                                TaskVariant variant,
                                std::span<const LookupTable> tables) {
  size_t mismatches = 0;
  for (const TaskExample& ex : split) {
    if (ex.target_tokens != oracle_target(ex.input_tokens, variant, tables))
      ++mismatches;
    if (ex.gold_attention !=
        gold_attention(ex.input_tokens, ex.target_tokens.size(), variant))
      ++mismatches;
  }
  CHECK(mismatches == 0);
}

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("longreach_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), {}};
}

void rewrite_first_line(const fs::path& p, const std::string& line) {
  std::string body = slurp(p);
  size_t nl = body.find('\n');
  REQUIRE(nl != std::string::npos);
  std::ofstream os(p, std::ios::binary);
  os << line << body.substr(nl);
}

}  // namespace

TEST_CASE("bit strings round trip and reject junk") {
  for (int v = 0; v < 8; ++v) CHECK(bits_from_string(bits_to_string(v)) == v);
  CHECK(bits_to_string(5) == "101");
  CHECK_THROWS_AS(bits_from_string("01"), Error);
  CHECK_THROWS_AS(bits_from_string("0012"), Error);
  CHECK_THROWS_AS(bits_from_string("abc"), Error);
}

TEST_CASE("sampled tables are bijections, deterministic per seed") {
  Rng a(123), b(123), c(124);
  auto ta = sample_tables(a);
  auto tb = sample_tables(b);
  auto tc = sample_tables(c);
  CHECK(ta == tb);
  CHECK(ta != tc);

  for (const LookupTable& t : ta) {
    std::set<std::string> outputs;
    for (int v = 0; v < 8; ++v) outputs.insert(t.apply(bits_to_string(v)));
    CHECK(outputs.size() == 8);
  }
  CHECK(ta[0].name == "t1");
  CHECK(ta[5].name == "t6");
}

TEST_CASE("force_entry pins a mapping and keeps the bijection") {
  auto tables = fixture_tables();
  CHECK(tables[0].apply("000") == "110");
  CHECK(tables[1].apply("110") == "100");
  for (const LookupTable& t : {tables[0], tables[1]}) {
    std::set<std::string> outputs;
    for (int v = 0; v < 8; ++v) outputs.insert(t.apply(bits_to_string(v)));
    CHECK(outputs.size() == 8);
  }
}

TEST_CASE("apply_tables chains left to right with intermediates") {
  auto tables = fixture_tables();
  std::vector<std::string> names = {"t1", "t2"};
  CHECK(apply_tables("000", names, tables) ==
        std::vector<std::string>{"000", "110", "100"});

  CHECK(apply_tables("011", std::vector<std::string>{}, tables) ==
        std::vector<std::string>{"011"});

  // A table followed by its inverse returns to the start.
  LookupTable inv;
  inv.name = "t2";
  for (int v = 0; v < 8; ++v)
    inv.map[tables[0].map[static_cast<size_t>(v)]] = static_cast<uint8_t>(v);
  std::array<LookupTable, 2> pair = {tables[0], inv};
  for (int v = 0; v < 8; ++v) {
    std::string bits = bits_to_string(v);
    auto chain = apply_tables(bits, names, pair);
    CHECK(chain.size() == 3);
    CHECK(chain[0] == bits);
    CHECK(chain[2] == bits);
  }

  std::vector<std::string> unknown = {"t9"};
  CHECK_THROWS_AS(apply_tables("000", unknown, tables), Error);
}

TEST_CASE("gold attention walks per variant") {
  CHECK(gold_attention({"000", "t1", "."}, 3, TaskVariant::Standard) ==
        std::vector<int>{0, 1, 2});
  CHECK(gold_attention({"000", "t1", "t2", "t3", "."}, 5,
                       TaskVariant::Standard) ==
        std::vector<int>{0, 1, 2, 3, 4});

  CHECK(gold_attention({"t2", "t1", "t1", "000", "."}, 5,
                       TaskVariant::Reversed) ==
        std::vector<int>{3, 2, 1, 0, 4});

  // One alignment index per output token; noise and "!" are never gold.
  CHECK(gold_attention({"000", "t2", "!", "t1", "."}, 3,
                       TaskVariant::NoisyStart) ==
        std::vector<int>{0, 3, 4});
  CHECK(gold_attention({"110", "!", "t4", "t5", "."}, 4,
                       TaskVariant::NoisyStart) ==
        std::vector<int>{0, 2, 3, 4});

  CHECK_THROWS_AS(gold_attention({"000", "t1"}, 3, TaskVariant::Standard),
                  Error);
  CHECK_THROWS_AS(gold_attention({"000", "t1", "."}, 1,
                                 TaskVariant::Standard),
                  Error);
  CHECK_THROWS_AS(gold_attention({"000", "t1", "."}, 3,
                                 TaskVariant::NoisyStart),
                  Error);
}

TEST_CASE("make_variant rewrites the surface form, never the target") {
  auto tables = fixture_tables();
  TaskExample standard;
  standard.input_tokens = {"000", "t1", "t1", "t2", "."};
  standard.target_tokens = apply_tables(
      "000", std::vector<std::string>{"t1", "t1", "t2"}, tables);
  standard.target_tokens.push_back("<eos>");
  standard.gold_attention = gold_attention(
      standard.input_tokens, standard.target_tokens.size(),
      TaskVariant::Standard);

  Rng rng(9);
  TaskExample rev = make_variant(standard, TaskVariant::Reversed, rng);
  CHECK(rev.input_tokens ==
        std::vector<std::string>{"t2", "t1", "t1", "000", "."});
  CHECK(rev.target_tokens == standard.target_tokens);
  CHECK(rev.gold_attention == std::vector<int>{3, 2, 1, 0, 4});

  TaskExample same = make_variant(standard, TaskVariant::Standard, rng);
  CHECK(same == standard);

  bool saw_zero_noise = false, saw_some_noise = false;
  for (int trial = 0; trial < 64; ++trial) {
    TaskExample noisy = make_variant(standard, TaskVariant::NoisyStart, rng);
    CHECK(noisy.target_tokens == standard.target_tokens);
    CHECK(noisy.input_tokens.front() == "000");
    CHECK(noisy.input_tokens.back() == ".");

    auto bang = std::find(noisy.input_tokens.begin(),
                          noisy.input_tokens.end(), "!");
    REQUIRE(bang != noisy.input_tokens.end());
    size_t m = static_cast<size_t>(bang - noisy.input_tokens.begin()) - 1;
    CHECK(m <= 10);
    (m == 0 ? saw_zero_noise : saw_some_noise) = true;

    // True tables after "!" must match the standard form exactly.
    CHECK(std::vector<std::string>(bang + 1, noisy.input_tokens.end()) ==
          std::vector<std::string>(standard.input_tokens.begin() + 1,
                                   standard.input_tokens.end()));
    CHECK(noisy.gold_attention ==
          gold_attention(noisy.input_tokens, noisy.target_tokens.size(),
                         TaskVariant::NoisyStart));
  }
  CHECK(saw_zero_noise);
  CHECK(saw_some_noise);
}

TEST_CASE("generated splits have the documented shape") {
  DatasetSplits ds = generate_splits(TaskVariant::Standard, 0);

  CHECK(ds.train.size() + ds.interpolation.size() == 12432);
  CHECK(ds.train.size() == 9432);
  CHECK(ds.interpolation.size() == 3000);
  for (int K = 1; K <= 5; ++K)
    CHECK(ds.longer[static_cast<size_t>(K - 1)].size() == 5000);

  // k = number of applied tables = target length minus input echo and <eos>.
  auto k_of = [](const TaskExample& ex) {
    return ex.target_tokens.size() - 2;
  };
  for (const TaskExample& ex : ds.train) {
    CHECK(k_of(ex) >= 1);
    CHECK(k_of(ex) <= 4);
  }
  for (const TaskExample& ex : ds.interpolation) {
    CHECK(k_of(ex) >= 2);
    CHECK(k_of(ex) <= 4);
  }
  for (int K = 1; K <= 5; ++K)
    for (const TaskExample& ex : ds.longer[static_cast<size_t>(K - 1)])
      CHECK(k_of(ex) == static_cast<size_t>(4 + K));

  // Train enumerates whatever interpolation does not hold out.
  std::set<std::pair<std::vector<std::string>, std::vector<std::string>>>
      train_pairs;
  for (const TaskExample& ex : ds.train)
    train_pairs.emplace(ex.input_tokens, ex.target_tokens);
  CHECK(train_pairs.size() == ds.train.size());
  for (const TaskExample& ex : ds.interpolation)
    CHECK(train_pairs.count({ex.input_tokens, ex.target_tokens}) == 0);

  size_t max_train_len = 0;
  for (const TaskExample& ex : ds.train)
    max_train_len = std::max(max_train_len, ex.input_tokens.size());
  for (const auto& split : ds.longer)
    for (const TaskExample& ex : split)
      CHECK(ex.input_tokens.size() > max_train_len);
}

TEST_CASE("every generated target satisfies the lookup oracle") {
  for (TaskVariant variant : {TaskVariant::Standard, TaskVariant::Reversed,
                              TaskVariant::NoisyStart}) {
    CAPTURE(to_string(variant));
    DatasetSplits ds = generate_splits(variant, 5);
    check_split_against_oracle(ds.train, variant, ds.tables);
    check_split_against_oracle(ds.interpolation, variant, ds.tables);
    for (const auto& split : ds.longer)
      check_split_against_oracle(split, variant, ds.tables);
  }
}

TEST_CASE("generation is a pure function of variant and seed") {
  DatasetSplits a = generate_splits(TaskVariant::NoisyStart, 3);
  DatasetSplits b = generate_splits(TaskVariant::NoisyStart, 3);
  CHECK(a.tables == b.tables);
  CHECK(a.train == b.train);
  CHECK(a.interpolation == b.interpolation);
  for (int K = 0; K < 5; ++K) CHECK(a.longer[K] == b.longer[K]);

  DatasetSplits c = generate_splits(TaskVariant::NoisyStart, 4);
  CHECK(a.train != c.train);
}

TEST_CASE("split names resolve to their vectors") {
  DatasetSplits ds = generate_splits(TaskVariant::Standard, 1);
  CHECK(split_names().size() == 7);
  CHECK(&split_by_name(ds, "train") == &ds.train);
  CHECK(&split_by_name(ds, "interpolation") == &ds.interpolation);
  CHECK(&split_by_name(ds, "long3") == &ds.longer[2]);
  CHECK_THROWS_AS(split_by_name(ds, "long6"), Error);
}

TEST_CASE("dataset files round trip exactly") {
  DatasetSplits ds = generate_splits(TaskVariant::Reversed, 11);
  fs::path dir = temp_dir("roundtrip");
  write_splits(ds, dir);

  for (const char* name : {"train.tsv", "interpolation.tsv", "long1.tsv",
                           "long2.tsv", "long3.tsv", "long4.tsv", "long5.tsv",
                           "meta.json"})
    CHECK(fs::exists(dir / name));

  DatasetSplits back = read_splits(dir);
  CHECK(back.variant == ds.variant);
  CHECK(back.seed == ds.seed);
  CHECK(back.tables == ds.tables);
  CHECK(back.train == ds.train);
  CHECK(back.interpolation == ds.interpolation);
  for (int K = 0; K < 5; ++K) CHECK(back.longer[K] == ds.longer[K]);

  // Same splits written twice produce identical bytes.
  fs::path dir2 = temp_dir("roundtrip2");
  write_splits(ds, dir2);
  for (const char* name : {"train.tsv", "long5.tsv", "meta.json"})
    CHECK(slurp(dir / name) == slurp(dir2 / name));

  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("parse errors carry file, line and column") {
  DatasetSplits ds = generate_splits(TaskVariant::Standard, 2);
  fs::path dir = temp_dir("tamper");

  SUBCASE("alignment index outside the input") {
    write_splits(ds, dir);
    rewrite_first_line(dir / "interpolation.tsv",
                       "000 t1 .\t000 110 <eos>\t0 99 2");
    try {
      read_splits(dir);
      FAIL("expected a parse error");
    } catch (const Error& e) {
      std::string msg = e.what();
      CHECK(msg.find("interpolation.tsv:1:") != std::string::npos);
      CHECK(msg.find("99") != std::string::npos);
    }
  }

  SUBCASE("missing <eos> terminal") {
    write_splits(ds, dir);
    rewrite_first_line(dir / "long2.tsv", "000 t1 .\t000 110\t0 1 2");
    try {
      read_splits(dir);
      FAIL("expected a parse error");
    } catch (const Error& e) {
      std::string msg = e.what();
      CHECK(msg.find("long2.tsv:1:") != std::string::npos);
      CHECK(msg.find("<eos>") != std::string::npos);
    }
  }

  SUBCASE("wrong field count") {
    write_splits(ds, dir);
    rewrite_first_line(dir / "train.tsv", "000 t1 . 000 110 <eos>");
    CHECK_THROWS_AS(read_splits(dir), Error);
  }

  fs::remove_all(dir);
}

TEST_CASE("variant strings round trip") {
  for (TaskVariant v : {TaskVariant::Standard, TaskVariant::Reversed,
                        TaskVariant::NoisyStart})
    CHECK(task_variant_from_string(to_string(v)) == v);
  CHECK_THROWS_AS(task_variant_from_string("bogus"), Error);
}
