#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xmlc {

inline constexpr std::size_t kDefaultMaxLen = 4000;
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kNumToken = "<num>";

enum class Split { Train, Validation, Test, Unknown };
const char* to_string(Split s);

enum class Terminology { Drg = 0, Cpt = 1, Drug = 2 };
inline constexpr std::size_t kNumTerminologies = 3;
const char* to_string(Terminology t);

// Auxiliary code strings, one list per terminology.
struct AuxCodes {
  std::vector<std::string> drg;
  std::vector<std::string> cpt;
  std::vector<std::string> drugs;

  const std::vector<std::string>& of(Terminology t) const;
  std::vector<std::string>& of(Terminology t);
  bool empty() const { return drg.empty() && cpt.empty() && drugs.empty(); }
};

// One line of a corpus file, before label/vocabulary resolution.
struct RawDocument {
  std::string doc_id;
  std::string text;
  std::vector<std::string> labels;
  AuxCodes aux;
};

struct DocumentRecord {
  std::string doc_id;
  std::vector<int> tokens;
  std::vector<int> labels;  // sorted, unique catalog ids
  AuxCodes aux;
  Split split = Split::Unknown;
};

// Cleans a clinical note: drops [** ... **] de-identification spans, turns
// punctuation into whitespace, deletes tokens mixing digits and letters,
// maps pure numbers to <num>, lowercases, and truncates to max_len tokens.
std::vector<std::string> preprocess(std::string_view text,
                                    std::size_t max_len = kDefaultMaxLen);

// Token frequency table; merging is associative and commutative so shards
// can be counted independently.
class TokenCounts {
 public:
  void add(std::span<const std::string> tokens);
  void merge(const TokenCounts& other);
  const std::map<std::string, std::uint64_t>& counts() const { return counts_; }

 private:
  std::map<std::string, std::uint64_t> counts_;
};

class Vocabulary {
 public:
  Vocabulary();  // specials only

  // Frequency-descending, then lexicographic; tokens below min_count -> UNK.
  static Vocabulary build(const TokenCounts& counts, std::uint64_t min_count);
  static Vocabulary parse(std::string_view contents);

  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  // Corpus frequency per id; specials carry 0.
  const std::vector<std::uint64_t>& frequencies() const { return freq_; }
  std::vector<int> encode(std::span<const std::string> tokens) const;

  // One token per line in id order, then a TAB and the frequency.
  std::string serialize() const;
  std::uint64_t hash() const;

 private:
  void push(std::string token, std::uint64_t freq);

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> freq_;
  std::unordered_map<std::string, int> index_;
};

Vocabulary build_vocab(std::span<const RawDocument> corpus, std::uint64_t min_count,
                       std::size_t max_len = kDefaultMaxLen);

// Label catalog: TSV "code<TAB>descriptor". Row order defines label ids.
class LabelCatalog {
 public:
  static LabelCatalog parse(std::string_view tsv);
  static LabelCatalog load(const std::string& path);

  std::size_t size() const { return codes_.size(); }
  const std::string& code(int id) const { return codes_.at(static_cast<std::size_t>(id)); }
  const std::string& descriptor(int id) const {
    return descriptors_.at(static_cast<std::size_t>(id));
  }
  // -1 when unknown.
  int find(std::string_view code) const;
  int id(std::string_view code) const;  // throws IngestionError when unknown

  // Descriptor tokens after preprocessing, mapped through the vocabulary.
  std::vector<std::vector<int>> descriptor_ids(const Vocabulary& vocab) const;
  std::string serialize() const;

 private:
  std::vector<std::string> codes_;
  std::vector<std::string> descriptors_;
  std::unordered_map<std::string, int> index_;
};

// JSON Lines: {"doc_id","text","labels","drg","cpt","drugs"}. Label and aux
// fields are optional.
std::vector<RawDocument> parse_corpus_jsonl(std::string_view contents);
std::vector<RawDocument> load_corpus_jsonl(const std::string& path);
std::string serialize_corpus_jsonl(std::span<const RawDocument> docs);

// Resolves labels against the catalog (unknown -> IngestionError) and tokens
// against the vocabulary.
std::vector<DocumentRecord> encode_corpus(std::span<const RawDocument> docs,
                                          const Vocabulary& vocab, const LabelCatalog& catalog,
                                          Split split, std::size_t max_len = kDefaultMaxLen);

// Encoded-corpus artifact: JSON Lines with token ids and label ids.
std::string serialize_encoded(std::span<const DocumentRecord> docs);
std::vector<DocumentRecord> parse_encoded(std::string_view contents, Split split);

}  // namespace xmlc
