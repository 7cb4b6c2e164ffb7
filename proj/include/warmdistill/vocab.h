// Copyright 2026 The Warmdistill Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef WARMDISTILL_VOCAB_H_
#define WARMDISTILL_VOCAB_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wd {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;

// Fixed character-level vocabulary: three specials followed by one token per
// character of the symbol table.
class Vocab {
 public:
  static const Vocab& Char();

  std::size_t size() const { return kNumSpecial + symbols_.size(); }
  bool Contains(char c) const;
  int Id(char c) const;
  // Throws kInvalidArgument on characters outside the table.
  std::vector<int> Encode(std::string_view text) const;
  // Renders ids as text. Specials are dropped and rendering stops at EOS.
  std::string Decode(std::span<const int> ids) const;
  std::string_view symbols() const { return symbols_; }

 private:
  static constexpr std::size_t kNumSpecial = 3;
  explicit Vocab(std::string symbols);
  std::string symbols_;
  int lookup_[256];
};

// A sequence of token ids; completions keep their terminating EOS.
struct TokenSeq {
  std::vector<int> ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool EndsWithEos() const { return !ids.empty() && ids.back() == kEosId; }
  bool operator==(const TokenSeq&) const = default;
};

TokenSeq EncodePrompt(std::string_view text);
// Encodes and appends EOS.
TokenSeq EncodeCompletion(std::string_view text);
std::string Render(const TokenSeq& seq);

}  // namespace wd

#endif  // WARMDISTILL_VOCAB_H_
