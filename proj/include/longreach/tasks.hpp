#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "longreach/rng.hpp"

namespace longreach {

enum class TaskVariant { Standard, Reversed, NoisyStart };

std::string to_string(TaskVariant variant);
TaskVariant task_variant_from_string(const std::string& name);

int bits_from_string(const std::string& s);  // "101" -> 5
std::string bits_to_string(int v);

// A bijection over the eight 3-bit strings.
struct LookupTable {
  std::string name;
  std::array<uint8_t, 8> map;

  std::string apply(const std::string& bits) const;

  // Pin map[input] = output, swapping with the current preimage so the
  // table stays bijective. Used by test fixtures.
  void force_entry(const std::string& input, const std::string& output);

  bool operator==(const LookupTable&) const = default;
};

// Six random bijections named t1..t6.
std::array<LookupTable, 6> sample_tables(Rng& rng);

// Chained application. Returns [input, t_a(input), t_b(t_a(input)), ...].
// Unknown table names raise Error.
std::vector<std::string> apply_tables(const std::string& input,
                                      std::span<const std::string> table_names,
                                      std::span<const LookupTable> tables);

struct TaskExample {
  std::vector<std::string> input_tokens;   // ends with "."
  std::vector<std::string> target_tokens;  // ends with "<eos>"
  std::vector<int> gold_attention;         // source index per target token

  bool operator==(const TaskExample&) const = default;
};

// Reference alignment: which source position each target token should
// attend to. Derived from the token layout of the variant.
std::vector<int> gold_attention(const std::vector<std::string>& input_tokens,
                                size_t target_len, TaskVariant variant);

struct DatasetSplits {
  TaskVariant variant = TaskVariant::Standard;
  uint64_t seed = 0;
  std::array<LookupTable, 6> tables;
  std::vector<TaskExample> train;          // k in 1..4 minus interpolation
  std::vector<TaskExample> interpolation;  // 3000 held-out, k in 2..4
  std::array<std::vector<TaskExample>, 5> longer;  // longK: k = 4 + K, 5000 each
};

// Pure function of (variant, seed). Enumerates every composition of
// k in 1..4 tables over all 8 inputs, holds out 3000 with k >= 2 as the
// interpolation split, and samples 5000 distinct longer compositions per
// longK split.
DatasetSplits generate_splits(TaskVariant variant, uint64_t seed);

// Rewrites a standard example into the given variant. Reversed flips the
// table order in the input; NoisyStart prepends m ~ U{0..10} distractor
// tables terminated by "!". Targets are unchanged.
TaskExample make_variant(const TaskExample& standard, TaskVariant variant,
                         Rng& rng);

// TSV (input, target, gold alignment; space-separated tokens) plus
// meta.json with variant, seed and the tables.
void write_splits(const DatasetSplits& splits,
                  const std::filesystem::path& dir);
DatasetSplits read_splits(const std::filesystem::path& dir);

std::vector<std::string> split_names();

const std::vector<TaskExample>& split_by_name(const DatasetSplits& splits,
                                              const std::string& name);

}  // namespace longreach
