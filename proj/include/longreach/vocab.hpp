#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "longreach/tensor.hpp"

namespace longreach {

// Fixed token inventory for the lookup-table tasks:
// <pad>, <sos>, <eos>, the eight 3-bit strings, t1..t6, ".", "!".
class Vocab {
 public:
  Vocab();

  int size() const { return static_cast<int>(tokens_.size()); }
  int pad() const { return 0; }
  int sos() const { return 1; }
  int eos() const { return 2; }

  int id(const std::string& token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace longreach
