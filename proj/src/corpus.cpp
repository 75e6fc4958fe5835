#include "xmlc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "json.hpp"
#include "xmlc/errors.hpp"
#include "xmlc/util.hpp"

namespace xmlc {

using nlohmann::json;

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    case Split::Unknown: break;
  }
  return "unknown";
}

const char* to_string(Terminology t) {
  switch (t) {
    case Terminology::Drg: return "drg";
    case Terminology::Cpt: return "cpt";
    case Terminology::Drug: return "drugs";
  }
  return "?";
}

const std::vector<std::string>& AuxCodes::of(Terminology t) const {
  switch (t) {
    case Terminology::Drg: return drg;
    case Terminology::Cpt: return cpt;
    case Terminology::Drug: break;
  }
  return drugs;
}

std::vector<std::string>& AuxCodes::of(Terminology t) {
  return const_cast<std::vector<std::string>&>(std::as_const(*this).of(t));
}

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
// Bytes >= 0x80 (UTF-8 continuation/lead bytes) count as letters.
bool is_letter(unsigned char c) { return std::isalpha(c) || c >= 0x80; }

std::string strip_deid(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t open = text.find("[**", i);
    if (open == std::string_view::npos) {
      out.append(text.substr(i));
      break;
    }
    out.append(text.substr(i, open - i));
    out.push_back(' ');
    const std::size_t close = text.find("**]", open + 3);
    if (close == std::string_view::npos) break;
    i = close + 3;
  }
  return out;
}

void emit_piece(std::string_view piece, std::vector<std::string>& out) {
  bool digit = false, letter = false;
  for (unsigned char c : piece) {
    digit = digit || is_digit(c);
    letter = letter || is_letter(c);
  }
  if (digit && letter) return;
  if (digit) {
    out.emplace_back(kNumToken);
    return;
  }
  std::string tok(piece);
  for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  out.push_back(std::move(tok));
}

}  // namespace

std::vector<std::string> preprocess(std::string_view text, std::size_t max_len) {
  const std::string clean = strip_deid(text);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < clean.size() && out.size() < max_len) {
    while (i < clean.size() && is_space(static_cast<unsigned char>(clean[i]))) ++i;
    std::size_t j = i;
    while (j < clean.size() && !is_space(static_cast<unsigned char>(clean[j]))) ++j;
    if (j == i) break;
    std::string_view chunk(clean.data() + i, j - i);
    i = j;
    // Already-normalised number placeholder survives a second pass.
    if (chunk == kNumToken) {
      out.emplace_back(kNumToken);
      continue;
    }
    std::size_t k = 0;
    while (k < chunk.size() && out.size() < max_len) {
      while (k < chunk.size() && std::ispunct(static_cast<unsigned char>(chunk[k]))) ++k;
      std::size_t e = k;
      while (e < chunk.size() && !std::ispunct(static_cast<unsigned char>(chunk[e]))) ++e;
      if (e > k) emit_piece(chunk.substr(k, e - k), out);
      k = e;
    }
  }
  if (out.size() > max_len) out.resize(max_len);
  return out;
}

void TokenCounts::add(std::span<const std::string> tokens) {
  for (const auto& t : tokens) ++counts_[t];
}

void TokenCounts::merge(const TokenCounts& other) {
  for (const auto& [tok, c] : other.counts_) counts_[tok] += c;
}

Vocabulary::Vocabulary() {
  push(std::string(kPadToken), 0);
  push(std::string(kUnkToken), 0);
}

void Vocabulary::push(std::string token, std::uint64_t freq) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
  freq_.push_back(freq);
}

Vocabulary Vocabulary::build(const TokenCounts& counts, std::uint64_t min_count) {
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [tok, c] : counts.counts()) {
    if (c < min_count || tok == kPadToken || tok == kUnkToken) continue;
    kept.emplace_back(tok, c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (auto& [tok, c] : kept) v.push(std::move(tok), c);
  return v;
}

Vocabulary Vocabulary::parse(std::string_view contents) {
  Vocabulary v;
  v.tokens_.clear();
  v.freq_.clear();
  v.index_.clear();
  std::size_t line_no = 0;
  for (const auto& line : split(contents, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2) throw FormatError("vocabulary line needs token<TAB>count", line_no);
    v.push(fields[0], std::stoull(fields[1]));
  }
  if (v.size() < 2 || v.tokens_[kPadId] != kPadToken || v.tokens_[kUnkId] != kUnkToken) {
    throw FormatError("vocabulary file must start with <pad> and <unk>");
  }
  return v;
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\t';
    out += std::to_string(freq_[i]);
    out += '\n';
  }
  return out;
}

std::uint64_t Vocabulary::hash() const { return fnv1a(serialize()); }

Vocabulary build_vocab(std::span<const RawDocument> corpus, std::uint64_t min_count,
                       std::size_t max_len) {
  if (corpus.empty()) throw IngestionError("cannot build a vocabulary from an empty corpus");
  TokenCounts counts;
  for (const auto& doc : corpus) counts.add(preprocess(doc.text, max_len));
  return Vocabulary::build(counts, min_count);
}

LabelCatalog LabelCatalog::parse(std::string_view tsv) {
  LabelCatalog cat;
  std::size_t line_no = 0;
  for (const auto& raw : split(tsv, '\n')) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("catalog line needs code<TAB>descriptor", line_no);
    std::string code = trim(std::string_view(line).substr(0, tab));
    if (code.empty()) throw FormatError("empty label code", line_no);
    if (cat.index_.count(code)) throw FormatError("duplicate label code " + code, line_no);
    cat.index_.emplace(code, static_cast<int>(cat.codes_.size()));
    cat.codes_.push_back(std::move(code));
    cat.descriptors_.push_back(line.substr(tab + 1));
  }
  return cat;
}

LabelCatalog LabelCatalog::load(const std::string& path) { return parse(read_file(path)); }

int LabelCatalog::find(std::string_view code) const {
  const auto it = index_.find(std::string(code));
  return it == index_.end() ? -1 : it->second;
}

int LabelCatalog::id(std::string_view code) const {
  const int i = find(code);
  if (i < 0) throw IngestionError("label " + std::string(code) + " is not in the catalog");
  return i;
}

std::vector<std::vector<int>> LabelCatalog::descriptor_ids(const Vocabulary& vocab) const {
  std::vector<std::vector<int>> out;
  out.reserve(descriptors_.size());
  for (const auto& d : descriptors_) out.push_back(vocab.encode(preprocess(d)));
  return out;
}

std::string LabelCatalog::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < codes_.size(); ++i) out += codes_[i] + "\t" + descriptors_[i] + "\n";
  return out;
}

namespace {

std::vector<std::string> string_list(const json& obj, const char* key, std::size_t line) {
  std::vector<std::string> out;
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return out;
  if (!it->is_array()) throw FormatError(std::string("field '") + key + "' must be a list", line);
  for (const auto& v : *it) {
    if (!v.is_string()) throw FormatError(std::string("field '") + key + "' must hold strings", line);
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

std::vector<RawDocument> parse_corpus_jsonl(std::string_view contents) {
  std::vector<RawDocument> docs;
  std::size_t line_no = 0;
  for (const auto& line : split(contents, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object() || !obj.contains("doc_id") || !obj.contains("text")) {
      throw FormatError("corpus line needs doc_id and text", line_no);
    }
    RawDocument d;
    d.doc_id = obj["doc_id"].is_string() ? obj["doc_id"].get<std::string>() : obj["doc_id"].dump();
    d.text = obj["text"].get<std::string>();
    d.labels = string_list(obj, "labels", line_no);
    d.aux.drg = string_list(obj, "drg", line_no);
    d.aux.cpt = string_list(obj, "cpt", line_no);
    d.aux.drugs = string_list(obj, "drugs", line_no);
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<RawDocument> load_corpus_jsonl(const std::string& path) {
  return parse_corpus_jsonl(read_file(path));
}

std::string serialize_corpus_jsonl(std::span<const RawDocument> docs) {
  std::string out;
  for (const auto& d : docs) {
    json obj = {{"doc_id", d.doc_id}, {"text", d.text},     {"labels", d.labels},
                {"drg", d.aux.drg},   {"cpt", d.aux.cpt}, {"drugs", d.aux.drugs}};
    out += obj.dump() + "\n";
  }
  return out;
}

std::vector<DocumentRecord> encode_corpus(std::span<const RawDocument> docs,
                                          const Vocabulary& vocab, const LabelCatalog& catalog,
                                          Split split, std::size_t max_len) {
  std::vector<DocumentRecord> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    DocumentRecord rec;
    rec.doc_id = d.doc_id;
    rec.tokens = vocab.encode(preprocess(d.text, max_len));
    std::set<int> labels;
    for (const auto& code : d.labels) labels.insert(catalog.id(code));
    rec.labels.assign(labels.begin(), labels.end());
    rec.aux = d.aux;
    rec.split = split;
    out.push_back(std::move(rec));
  }
  return out;
}

std::string serialize_encoded(std::span<const DocumentRecord> docs) {
  std::string out;
  for (const auto& d : docs) {
    json obj = {{"doc_id", d.doc_id},  {"tokens", d.tokens}, {"labels", d.labels},
                {"drg", d.aux.drg},    {"cpt", d.aux.cpt},   {"drugs", d.aux.drugs}};
    out += obj.dump() + "\n";
  }
  return out;
}

std::vector<DocumentRecord> parse_encoded(std::string_view contents, Split split) {
  std::vector<DocumentRecord> docs;
  std::size_t line_no = 0;
  for (const auto& line : xmlc::split(contents, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json obj = json::parse(line);
      DocumentRecord d;
      d.doc_id = obj.at("doc_id").get<std::string>();
      d.tokens = obj.at("tokens").get<std::vector<int>>();
      d.labels = obj.at("labels").get<std::vector<int>>();
      d.aux.drg = obj.at("drg").get<std::vector<std::string>>();
      d.aux.cpt = obj.at("cpt").get<std::vector<std::string>>();
      d.aux.drugs = obj.at("drugs").get<std::vector<std::string>>();
      d.split = split;
      docs.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw FormatError(std::string("bad encoded document: ") + e.what(), line_no);
    }
  }
  return docs;
}

}  // namespace xmlc
