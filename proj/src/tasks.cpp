#include "longreach/tasks.hpp"

#include <json.hpp>

#include <fstream>
#include <numeric>
#include <unordered_set>

#include "longreach/tensor.hpp"

namespace longreach {

std::string to_string(TaskVariant variant) {
  switch (variant) {
    case TaskVariant::Standard: return "standard";
    case TaskVariant::Reversed: return "reversed";
    case TaskVariant::NoisyStart: return "noisy";
  }
  throw Error("tasks: bad variant");
}

TaskVariant task_variant_from_string(const std::string& name) {
  for (TaskVariant v : {TaskVariant::Standard, TaskVariant::Reversed,
                        TaskVariant::NoisyStart})
    if (to_string(v) == name) return v;
  throw Error("tasks: unknown variant '" + name + "'");
}

int bits_from_string(const std::string& s) {
  if (s.size() != 3 || s.find_first_not_of("01") != std::string::npos)
    throw Error("tasks: '" + s + "' is not a 3-bit string");
  return ((s[0] - '0') << 2) | ((s[1] - '0') << 1) | (s[2] - '0');
}

std::string bits_to_string(int v) {
  if (v < 0 || v > 7) throw Error("tasks: bit value out of range");
  return {static_cast<char>('0' + ((v >> 2) & 1)),
          static_cast<char>('0' + ((v >> 1) & 1)),
          static_cast<char>('0' + (v & 1))};
}

std::string LookupTable::apply(const std::string& bits) const {
  return bits_to_string(map[static_cast<size_t>(bits_from_string(bits))]);
}

void LookupTable::force_entry(const std::string& input,
                              const std::string& output) {
  uint8_t in = static_cast<uint8_t>(bits_from_string(input));
  uint8_t out = static_cast<uint8_t>(bits_from_string(output));
  for (size_t p = 0; p < map.size(); ++p) {
    if (map[p] == out) {
      std::swap(map[p], map[in]);
      return;
    }
  }
}

std::array<LookupTable, 6> sample_tables(Rng& rng) {
  std::array<LookupTable, 6> tables;
  for (int t = 0; t < 6; ++t) {
    tables[t].name = "t" + std::to_string(t + 1);
    std::vector<uint8_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::copy(perm.begin(), perm.end(), tables[t].map.begin());
  }
  return tables;
}

std::vector<std::string> apply_tables(const std::string& input,
                                      std::span<const std::string> table_names,
                                      std::span<const LookupTable> tables) {
  std::vector<std::string> out;
  out.reserve(table_names.size() + 1);
  std::string cur = bits_to_string(bits_from_string(input));
  out.push_back(cur);
  for (const std::string& name : table_names) {
    const LookupTable* found = nullptr;
    for (const LookupTable& t : tables)
      if (t.name == name) {
        found = &t;
        break;
      }
    if (!found) throw Error("tasks: unknown table name '" + name + "'");
    cur = found->apply(cur);
    out.push_back(cur);
  }
  return out;
}

namespace {

bool is_bits(const std::string& s) {
  return s.size() == 3 && s.find_first_not_of("01") == std::string::npos;
}

bool is_table_name(const std::string& s) {
  return s.size() == 2 && s[0] == 't' && s[1] >= '1' && s[1] <= '6';
}

size_t find_token(const std::vector<std::string>& tokens,
                  bool (*pred)(const std::string&), const char* what) {
  for (size_t i = 0; i < tokens.size(); ++i)
    if (pred(tokens[i])) return i;
  throw Error(std::string("tasks: no ") + what + " token in input");
}

}  // namespace

std::vector<int> gold_attention(const std::vector<std::string>& input_tokens,
                                size_t target_len, TaskVariant variant) {
  if (input_tokens.empty() || input_tokens.back() != ".")
    throw Error("tasks: input must end with '.'");
  if (target_len < 2) throw Error("tasks: target too short");
  size_t k = target_len - 2;  // table applications
  int dot = static_cast<int>(input_tokens.size()) - 1;

  std::vector<int> gold;
  gold.reserve(target_len);
  switch (variant) {
    case TaskVariant::Standard: {
      // [bits, tables..., "."]: walk left to right.
      for (size_t i = 0; i <= k; ++i) gold.push_back(static_cast<int>(i));
      break;
    }
    case TaskVariant::Reversed: {
      // [tables..., bits, "."]: echo the bits, then walk right to left.
      size_t bits_pos =
          find_token(input_tokens, is_bits, "bit-string");
      gold.push_back(static_cast<int>(bits_pos));
      for (size_t i = 0; i < k; ++i)
        gold.push_back(static_cast<int>(bits_pos - 1 - i));
      break;
    }
    case TaskVariant::NoisyStart: {
      // [bits, noise..., "!", tables..., "."]: skip everything up to "!".
      size_t bang = find_token(
          input_tokens, [](const std::string& s) { return s == "!"; },
          "'!'");
      gold.push_back(0);
      for (size_t i = 1; i <= k; ++i)
        gold.push_back(static_cast<int>(bang + i));
      break;
    }
  }
  gold.push_back(dot);

  for (int g : gold)
    if (g < 0 || g >= static_cast<int>(input_tokens.size()))
      throw Error("tasks: alignment index out of range");
  return gold;
}

namespace {

TaskExample make_standard_example(int input_val, std::span<const int> combo,
                                  const std::array<LookupTable, 6>& tables) {
  TaskExample ex;
  ex.input_tokens.push_back(bits_to_string(input_val));
  std::vector<std::string> names;
  for (int idx : combo) {
    names.push_back(tables[static_cast<size_t>(idx)].name);
    ex.input_tokens.push_back(names.back());
  }
  ex.input_tokens.push_back(".");
  ex.target_tokens =
      apply_tables(bits_to_string(input_val), names, tables);
  ex.target_tokens.push_back("<eos>");
  ex.gold_attention = gold_attention(ex.input_tokens, ex.target_tokens.size(),
                                     TaskVariant::Standard);
  return ex;
}

uint64_t pow6(int k) {
  uint64_t r = 1;
  for (int i = 0; i < k; ++i) r *= 6;
  return r;
}

}  // namespace

TaskExample make_variant(const TaskExample& standard, TaskVariant variant,
                         Rng& rng) {
  if (variant == TaskVariant::Standard) return standard;

  TaskExample ex;
  ex.target_tokens = standard.target_tokens;
  const auto& in = standard.input_tokens;

  if (variant == TaskVariant::Reversed) {
    ex.input_tokens.assign(in.rbegin() + 1, in.rend());
    ex.input_tokens.push_back(".");
  } else {
    size_t m = rng.below(11);
    ex.input_tokens.push_back(in.front());  // bits
    for (size_t i = 0; i < m; ++i)
      ex.input_tokens.push_back("t" + std::to_string(rng.below(6) + 1));
    ex.input_tokens.push_back("!");
    ex.input_tokens.insert(ex.input_tokens.end(), in.begin() + 1, in.end());
  }
  ex.gold_attention =
      gold_attention(ex.input_tokens, ex.target_tokens.size(), variant);
  return ex;
}

DatasetSplits generate_splits(TaskVariant variant, uint64_t seed) {
  Rng root(seed);
  DatasetSplits ds;
  ds.variant = variant;
  ds.seed = seed;
  {
    Rng table_rng = root.substream("tables");
    ds.tables = sample_tables(table_rng);
  }

  // Every composition of k in 1..4 tables over all 8 inputs.
  std::vector<TaskExample> base;
  std::vector<int> base_k;
  for (int k = 1; k <= 4; ++k) {
    uint64_t combos = pow6(k);
    std::vector<int> combo(static_cast<size_t>(k));
    for (uint64_t c = 0; c < combos; ++c) {
      uint64_t rest = c;
      for (int j = k - 1; j >= 0; --j) {
        combo[static_cast<size_t>(j)] = static_cast<int>(rest % 6);
        rest /= 6;
      }
      for (int input = 0; input < 8; ++input) {
        base.push_back(make_standard_example(input, combo, ds.tables));
        base_k.push_back(k);
      }
    }
  }

  // Hold out 3000 of the k >= 2 examples for interpolation testing.
  std::vector<size_t> candidates;
  for (size_t i = 0; i < base.size(); ++i)
    if (base_k[i] >= 2) candidates.push_back(i);
  {
    Rng pick = root.substream("interpolation");
    pick.shuffle(candidates);
  }
  std::vector<bool> held(base.size(), false);
  for (size_t i = 0; i < 3000 && i < candidates.size(); ++i)
    held[candidates[i]] = true;

  for (size_t i = 0; i < base.size(); ++i)
    (held[i] ? ds.interpolation : ds.train).push_back(std::move(base[i]));

  // longK: k = 4 + K, 5000 distinct samples each.
  for (int K = 1; K <= 5; ++K) {
    int k = 4 + K;
    Rng draw = root.substream("long" + std::to_string(K));
    uint64_t total = 8ull * pow6(k);
    std::unordered_set<uint64_t> seen;
    std::vector<int> combo(static_cast<size_t>(k));
    auto& out = ds.longer[static_cast<size_t>(K - 1)];
    while (out.size() < 5000) {
      uint64_t key = draw.below(total);
      if (!seen.insert(key).second) continue;
      int input = static_cast<int>(key % 8);
      uint64_t rest = key / 8;
      for (int j = 0; j < k; ++j) {
        combo[static_cast<size_t>(j)] = static_cast<int>(rest % 6);
        rest /= 6;
      }
      out.push_back(make_standard_example(input, combo, ds.tables));
    }
  }

  if (variant != TaskVariant::Standard) {
    Rng noise = root.substream("noise");
    auto transform = [&](std::vector<TaskExample>& split) {
      for (TaskExample& ex : split) ex = make_variant(ex, variant, noise);
    };
    transform(ds.train);
    transform(ds.interpolation);
    for (auto& split : ds.longer) transform(split);
  }
  return ds;
}

std::vector<std::string> split_names() {
  return {"train", "interpolation", "long1", "long2", "long3", "long4",
          "long5"};
}

const std::vector<TaskExample>& split_by_name(const DatasetSplits& splits,
                                              const std::string& name) {
  if (name == "train") return splits.train;
  if (name == "interpolation") return splits.interpolation;
  for (int K = 1; K <= 5; ++K)
    if (name == "long" + std::to_string(K))
      return splits.longer[static_cast<size_t>(K - 1)];
  throw Error("tasks: unknown split '" + name + "'");
}

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

void write_split(const std::filesystem::path& file,
                 const std::vector<TaskExample>& split) {
  std::ofstream os(file);
  if (!os) throw Error("tasks: cannot write " + file.string());
  for (const TaskExample& ex : split) {
    os << join(ex.input_tokens) << '\t' << join(ex.target_tokens) << '\t';
    for (size_t i = 0; i < ex.gold_attention.size(); ++i) {
      if (i) os << ' ';
      os << ex.gold_attention[i];
    }
    os << '\n';
  }
  if (!os) throw Error("tasks: write failed for " + file.string());
}

[[noreturn]] void parse_fail(const std::filesystem::path& file, size_t line,
                             size_t col, const std::string& msg) {
  throw Error(file.string() + ":" + std::to_string(line) + ":" +
              std::to_string(col) + ": " + msg);
}

std::vector<std::string> split_ws(const std::string& field) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < field.size()) {
    size_t j = field.find(' ', i);
    if (j == std::string::npos) j = field.size();
    if (j > i) out.push_back(field.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

std::vector<TaskExample> read_split(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw Error("tasks: cannot read " + file.string());
  std::vector<TaskExample> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;

    size_t tab1 = line.find('\t');
    size_t tab2 = tab1 == std::string::npos ? std::string::npos
                                            : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos ||
        line.find('\t', tab2 + 1) != std::string::npos)
      parse_fail(file, lineno, 1, "expected exactly 3 tab-separated fields");

    TaskExample ex;
    ex.input_tokens = split_ws(line.substr(0, tab1));
    ex.target_tokens = split_ws(line.substr(tab1 + 1, tab2 - tab1 - 1));
    std::string gold_field = line.substr(tab2 + 1);

    if (ex.input_tokens.empty() || ex.input_tokens.back() != ".")
      parse_fail(file, lineno, 1, "input must end with '.'");
    for (const std::string& t : ex.input_tokens)
      if (!is_bits(t) && !is_table_name(t) && t != "." && t != "!")
        parse_fail(file, lineno, 1, "unknown input token '" + t + "'");
    if (ex.target_tokens.empty() || ex.target_tokens.back() != "<eos>")
      parse_fail(file, lineno, tab1 + 2, "target must end with '<eos>'");
    for (size_t i = 0; i + 1 < ex.target_tokens.size(); ++i)
      if (!is_bits(ex.target_tokens[i]))
        parse_fail(file, lineno, tab1 + 2,
                   "target token '" + ex.target_tokens[i] +
                       "' is not a bit-string");

    size_t col = tab2 + 2;
    for (const std::string& g : split_ws(gold_field)) {
      size_t pos = 0;
      int v = 0;
      try {
        v = std::stoi(g, &pos);
      } catch (const std::exception&) {
        parse_fail(file, lineno, col, "alignment entry '" + g + "' is not an integer");
      }
      if (pos != g.size())
        parse_fail(file, lineno, col, "alignment entry '" + g + "' is not an integer");
      if (v < 0 || v >= static_cast<int>(ex.input_tokens.size()))
        parse_fail(file, lineno, col,
                   "alignment index " + g + " outside the input");
      ex.gold_attention.push_back(v);
      col += g.size() + 1;
    }
    if (ex.gold_attention.size() != ex.target_tokens.size())
      parse_fail(file, lineno, tab2 + 2,
                 "alignment length != target length");
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

void write_splits(const DatasetSplits& splits,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  nlohmann::ordered_json meta;
  meta["variant"] = to_string(splits.variant);
  meta["seed"] = splits.seed;
  nlohmann::ordered_json tables = nlohmann::ordered_json::object();
  for (const LookupTable& t : splits.tables) {
    nlohmann::ordered_json entries = nlohmann::ordered_json::object();
    for (int v = 0; v < 8; ++v)
      entries[bits_to_string(v)] = bits_to_string(t.map[static_cast<size_t>(v)]);
    tables[t.name] = entries;
  }
  meta["tables"] = tables;
  std::ofstream mf(dir / "meta.json");
  if (!mf) throw Error("tasks: cannot write meta.json");
  mf << meta.dump(2) << "\n";

  write_split(dir / "train.tsv", splits.train);
  write_split(dir / "interpolation.tsv", splits.interpolation);
  for (int K = 1; K <= 5; ++K)
    write_split(dir / ("long" + std::to_string(K) + ".tsv"),
                splits.longer[static_cast<size_t>(K - 1)]);
}

DatasetSplits read_splits(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "meta.json");
  if (!mf) throw Error("tasks: missing meta.json in " + dir.string());
  nlohmann::json meta;
  try {
    mf >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error("tasks: malformed meta.json: " + std::string(e.what()));
  }

  DatasetSplits ds;
  try {
    ds.variant = task_variant_from_string(meta.at("variant").get<std::string>());
    ds.seed = meta.at("seed").get<uint64_t>();
    const auto& tables = meta.at("tables");
    for (int t = 0; t < 6; ++t) {
      std::string name = "t" + std::to_string(t + 1);
      const auto& entries = tables.at(name);
      LookupTable& table = ds.tables[static_cast<size_t>(t)];
      table.name = name;
      std::array<bool, 8> used{};
      for (int v = 0; v < 8; ++v) {
        int out = bits_from_string(
            entries.at(bits_to_string(v)).get<std::string>());
        if (used[static_cast<size_t>(out)])
          throw Error("tasks: table " + name + " is not a bijection");
        used[static_cast<size_t>(out)] = true;
        table.map[static_cast<size_t>(v)] = static_cast<uint8_t>(out);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("tasks: meta.json missing fields: " + std::string(e.what()));
  }

  ds.train = read_split(dir / "train.tsv");
  ds.interpolation = read_split(dir / "interpolation.tsv");
  for (int K = 1; K <= 5; ++K)
    ds.longer[static_cast<size_t>(K - 1)] =
        read_split(dir / ("long" + std::to_string(K) + ".tsv"));
  return ds;
}

}  // namespace longreach
