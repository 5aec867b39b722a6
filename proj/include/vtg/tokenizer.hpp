// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtg/common.hpp"

namespace vtg {

// Whitespace tokenizer with byte fallback. Ids 0..255 are raw bytes, 256 is
// <eos>, words learned from the corpus follow, and <LOC> is always the last
// id so it sits outside the base range.
class Tokenizer {
 public:
  static constexpr int kBytes = 256;
  static constexpr const char* kLocText = "<LOC>";

  Tokenizer() = default;

  void fit(const std::vector<std::string>& corpus) {
    words_.clear();
    id_to_word_.clear();
    for (const auto& line : corpus) {
      for (const auto& piece : split_pieces(line)) {
        if (piece == kLocText) continue;
        if (!words_.contains(piece)) {
          const int id = kBytes + 1 + static_cast<int>(id_to_word_.size());
          words_[piece] = id;
          id_to_word_.push_back(piece);
        }
      }
    }
  }

  int eos_id() const { return kBytes; }
  int loc_id() const { return kBytes + 1 + static_cast<int>(id_to_word_.size()); }
  int vocab_size() const { return loc_id() + 1; }

  std::vector<int> encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& piece : split_pieces(text)) {
      if (piece == kLocText) {
        ids.push_back(loc_id());
      } else if (auto it = words_.find(piece); it != words_.end()) {
        ids.push_back(it->second);
      } else {
        for (unsigned char b : piece) ids.push_back(static_cast<int>(b));
      }
    }
    return ids;
  }

  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    std::string bytes;
    auto flush_bytes = [&] {
      if (!bytes.empty()) {
        append_word(out, bytes);
        bytes.clear();
      }
    };
    for (int id : ids) {
      if (id >= 0 && id < kBytes) {
        bytes.push_back(static_cast<char>(id));
        continue;
      }
      flush_bytes();
      if (id == eos_id()) continue;
      if (id == loc_id()) {
        append_word(out, kLocText);
      } else if (id > kBytes && id < loc_id()) {
        append_word(out, id_to_word_[static_cast<size_t>(id - kBytes - 1)]);
      }
    }
    flush_bytes();
    return out;
  }

  void save(const std::filesystem::path& path) const {
    nlohmann::json j{{"version", 1}, {"words", id_to_word_}};
    std::ofstream os(path);
    if (!os) throw Error(ErrorCategory::io, "cannot write vocab: " + path.string());
    os << j.dump(2) << '\n';
  }

  static Tokenizer load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCategory::io, "cannot open vocab: " + path.string());
    nlohmann::json j;
    is >> j;
    Tokenizer t;
    t.id_to_word_ = j.at("words").get<std::vector<std::string>>();
    for (size_t i = 0; i < t.id_to_word_.size(); ++i) {
      t.words_[t.id_to_word_[i]] = kBytes + 1 + static_cast<int>(i);
    }
    return t;
  }

  // Whitespace split with trailing punctuation peeled into its own token, so
  // "<LOC>." round-trips as the special token plus ".".
  static std::vector<std::string> split_pieces(const std::string& text) {
    std::vector<std::string> pieces;
    size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j > i) {
        std::string chunk = text.substr(i, j - i);
        size_t end = chunk.size();
        while (end > 1 && is_punct(chunk[end - 1])) --end;
        pieces.push_back(chunk.substr(0, end));
        for (size_t k = end; k < chunk.size(); ++k) pieces.push_back(std::string(1, chunk[k]));
      }
      i = j;
    }
    return pieces;
  }

 private:
  static bool is_punct(char c) {
    return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
  }

  static void append_word(std::string& out, const std::string& word) {
    const bool attach = word.size() == 1 && is_punct(word[0]);
    if (!out.empty() && !attach) out.push_back(' ');
    out += word;
  }

  std::unordered_map<std::string, int> words_;
  std::vector<std::string> id_to_word_;
};

}  // namespace vtg
