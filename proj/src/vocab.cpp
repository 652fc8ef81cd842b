#include "longreach/vocab.hpp"

namespace longreach {

Vocab::Vocab() {
  tokens_ = {"<pad>", "<sos>", "<eos>"};
  for (int v = 0; v < 8; ++v) {
    std::string bits = {static_cast<char>('0' + ((v >> 2) & 1)),
                        static_cast<char>('0' + ((v >> 1) & 1)),
                        static_cast<char>('0' + (v & 1))};
    tokens_.push_back(bits);
  }
  for (int t = 1; t <= 6; ++t) tokens_.push_back("t" + std::to_string(t));
  tokens_.push_back(".");
  tokens_.push_back("!");
  for (size_t i = 0; i < tokens_.size(); ++i)
    ids_[tokens_[i]] = static_cast<int>(i);
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw Error("vocab: unknown token '" + token + "'");
  return it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    throw Error("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocab::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

}  // namespace longreach
