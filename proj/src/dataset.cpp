#include "wukong/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "prompt_templates.hpp"
#include "wukong/errors.hpp"
#include "wukong/hash.hpp"
#include "wukong/text.hpp"

namespace wukong {

namespace {

struct StrategyInfo {
  Strategy strategy;
  const char* name;
  const char* display;
  const char* category;
};

constexpr StrategyInfo kStrategies[] = {
    {Strategy::TextOnly, "TextOnly", "Text-only", "Single"},
    {Strategy::ImageOnly, "ImageOnly", "Image-only", "Single"},
    {Strategy::ImageText, "ImageText", "Image-text", "Multi"},
    {Strategy::Section, "Section", "Section", "Multi"},
    {Strategy::CrossParagraph, "CrossParagraph", "Cross-paragraph", "Multi"},
};

const StrategyInfo& info(Strategy s) { return kStrategies[static_cast<int>(s)]; }

}  // namespace

const char* strategy_name(Strategy s) noexcept { return info(s).name; }

Strategy parse_strategy(std::string_view s) {
  for (const auto& i : kStrategies) {
    if (s == i.name) return i.strategy;
  }
  throw ConfigError("unknown strategy: " + std::string(s));
}

const char* split_name(Split s) noexcept { return s == Split::Train ? "train" : "test"; }

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split: " + std::string(s));
}

const char* phase_name(Phase p) noexcept {
  switch (p) {
    case Phase::QA: return "qa";
    case Phase::Question: return "question";
    case Phase::Answer: return "answer";
    case Phase::AnswerConcise: return "answer_concise";
    case Phase::AnswerKeywords: return "answer_keywords";
  }
  return "?";
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> all{Strategy::TextOnly, Strategy::ImageOnly, Strategy::ImageText,
                                         Strategy::Section, Strategy::CrossParagraph};
  return all;
}

// --- figure references -------------------------------------------------------------

namespace {

const std::regex& ref_pattern() {
  static const std::regex re(R"((Figure|Fig\.|Table)\s*(\d+))", std::regex::icase);
  return re;
}

FigureRef make_ref(const std::string& word, const std::string& number) {
  return FigureRef{text::to_lower_ascii(word).rfind("tab", 0) == 0 ? "table" : "figure", number};
}

}  // namespace

std::vector<FigureRef> find_figure_refs(std::string_view s) {
  std::vector<FigureRef> out;
  const std::string str(s);
  for (auto it = std::sregex_iterator(str.begin(), str.end(), ref_pattern()); it != std::sregex_iterator(); ++it) {
    auto ref = make_ref((*it)[1].str(), (*it)[2].str());
    if (std::find(out.begin(), out.end(), ref) == out.end()) out.push_back(std::move(ref));
  }
  return out;
}

std::optional<FigureRef> parse_figure_label(std::string_view label) {
  std::smatch m;
  const std::string str = text::trim(label);
  if (!std::regex_search(str, m, ref_pattern()) || m.position(0) != 0) return std::nullopt;
  return make_ref(m[1].str(), m[2].str());
}

// --- selection ---------------------------------------------------------------------

namespace {

template <typename T>
const T& pick(const std::vector<T>& items, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, items.size() - 1);
  return items[d(rng)];
}

std::vector<const TextChunk*> text_chunks(const ParsedDocument& doc) {
  std::vector<const TextChunk*> out;
  for (const auto& c : doc.chunks()) {
    if (const auto* t = std::get_if<TextChunk>(&c)) out.push_back(t);
  }
  return out;
}

std::vector<const ImageChunk*> image_chunks(const ParsedDocument& doc) {
  std::vector<const ImageChunk*> out;
  for (const auto& c : doc.chunks()) {
    if (const auto* i = std::get_if<ImageChunk>(&c)) out.push_back(i);
  }
  return out;
}

std::vector<std::pair<const TextChunk*, const ImageChunk*>> reference_pairs(const ParsedDocument& doc) {
  std::map<FigureRef, std::vector<const ImageChunk*>> by_label;
  for (const auto* img : image_chunks(doc)) {
    if (!img->figure_label) continue;
    if (auto ref = parse_figure_label(*img->figure_label)) by_label[*ref].push_back(img);
  }
  std::vector<std::pair<const TextChunk*, const ImageChunk*>> out;
  for (const auto* t : text_chunks(doc)) {
    for (const auto& ref : find_figure_refs(t->text)) {
      const auto it = by_label.find(ref);
      if (it == by_label.end()) continue;
      for (const auto* img : it->second) out.emplace_back(t, img);
    }
  }
  return out;
}

std::vector<std::vector<std::string>> section_paths(const ParsedDocument& doc) {
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& p = doc.effective_section(i);
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  }
  return out;
}

std::vector<std::string> section_members(const ParsedDocument& doc, const std::vector<std::string>& path) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (doc.effective_section(i) == path) out.push_back(chunk_id(doc.chunks()[i]));
  }
  return out;
}

std::shared_ptr<const EmbeddingRecord> text_vector(const SelectionContext& ctx, const TextChunk& t) {
  return ctx.cache->find(ctx.text_provider_id, text_content_hash(t.text));
}

bool far_apart(std::size_t a, std::size_t b) { return (a > b ? a - b : b - a) >= 2; }

EvidenceSelection select_cross_paragraph(const ParsedDocument& doc, std::mt19937_64& rng,
                                         const SelectionContext& ctx) {
  if (ctx.cache == nullptr) throw ConfigError("CrossParagraph selection needs an embedding cache");
  struct Candidate {
    const TextChunk* chunk;
    std::shared_ptr<const EmbeddingRecord> vec;
  };
  std::vector<Candidate> pool;
  for (const auto* t : text_chunks(doc)) {
    auto v = text_vector(ctx, *t);
    if (!v) throw CacheMissError({t->chunk_id});
    pool.push_back({t, std::move(v)});
  }
  std::uniform_int_distribution<std::size_t> size_dist(2, 4);
  const auto target = size_dist(rng);
  std::vector<std::size_t> starts(pool.size());
  std::iota(starts.begin(), starts.end(), 0);
  std::shuffle(starts.begin(), starts.end(), rng);
  for (const auto s : starts) {
    std::vector<std::size_t> chosen{s};
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (i != s) others.push_back(i);
    }
    std::shuffle(others.begin(), others.end(), rng);
    for (const auto o : others) {
      if (chosen.size() >= target) break;
      const bool fits = std::all_of(chosen.begin(), chosen.end(), [&](std::size_t c) {
        return far_apart(pool[c].chunk->order_index, pool[o].chunk->order_index) &&
               cosine_similarity(pool[c].vec->vector, pool[o].vec->vector) >= ctx.theta_rel;
      });
      if (fits) chosen.push_back(o);
    }
    if (chosen.size() >= 2) {
      std::sort(chosen.begin(), chosen.end(),
                [&](std::size_t a, std::size_t b) { return pool[a].chunk->order_index < pool[b].chunk->order_index; });
      EvidenceSelection sel;
      sel.strategy = Strategy::CrossParagraph;
      for (const auto c : chosen) sel.chunk_ids.push_back(pool[c].chunk->chunk_id);
      return sel;
    }
  }
  throw StrategyUnsatisfiableError("no two related, non-adjacent paragraphs in " + doc.doc_id());
}

}  // namespace

EvidenceSelection select_evidence(const ParsedDocument& doc, Strategy strategy, std::uint64_t seed,
                                  const SelectionContext& context) {
  std::mt19937_64 rng(seed);
  EvidenceSelection sel;
  sel.strategy = strategy;
  switch (strategy) {
    case Strategy::TextOnly: {
      const auto texts = text_chunks(doc);
      if (texts.empty()) throw StrategyUnsatisfiableError(doc.doc_id() + " has no text chunk");
      sel.chunk_ids = {pick(texts, rng)->chunk_id};
      break;
    }
    case Strategy::ImageOnly: {
      const auto images = image_chunks(doc);
      if (images.empty()) throw StrategyUnsatisfiableError(doc.doc_id() + " has no image chunk");
      sel.chunk_ids = {pick(images, rng)->chunk_id};
      break;
    }
    case Strategy::ImageText: {
      const auto pairs = reference_pairs(doc);
      if (pairs.empty()) throw StrategyUnsatisfiableError(doc.doc_id() + " has no resolvable figure reference");
      const auto& [t, img] = pick(pairs, rng);
      sel.chunk_ids = {t->chunk_id, img->chunk_id};
      break;
    }
    case Strategy::Section: {
      const auto paths = section_paths(doc);
      sel.chunk_ids = section_members(doc, pick(paths, rng));
      break;
    }
    case Strategy::CrossParagraph:
      sel = select_cross_paragraph(doc, rng, context);
      break;
  }
  sel.doc_id = doc.doc_id();
  sel.rng_seed = seed;
  return sel;
}

void check_selection(const EvidenceSelection& sel, const ParsedDocument& doc, const SelectionContext& context) {
  auto fail = [&](const std::string& why) {
    throw IntegrityError(std::string(strategy_name(sel.strategy)) + " selection on " + doc.doc_id() + ": " + why);
  };
  if (sel.doc_id != doc.doc_id()) fail("doc_id mismatch");
  if (sel.chunk_ids.empty()) fail("no chunks");
  std::vector<const Chunk*> chunks;
  for (const auto& id : sel.chunk_ids) {
    const auto* c = doc.find(id);
    if (c == nullptr) fail("unknown chunk " + id);
    chunks.push_back(c);
  }
  const std::set<std::string> unique(sel.chunk_ids.begin(), sel.chunk_ids.end());
  if (unique.size() != sel.chunk_ids.size()) fail("duplicate chunk ids");
  const auto n_text = static_cast<std::size_t>(
      std::count_if(chunks.begin(), chunks.end(), [](const Chunk* c) { return std::holds_alternative<TextChunk>(*c); }));
  const auto n_image = chunks.size() - n_text;
  switch (sel.strategy) {
    case Strategy::TextOnly:
      if (chunks.size() != 1 || n_text != 1) fail("expected one text chunk");
      break;
    case Strategy::ImageOnly:
      if (chunks.size() != 1 || n_image != 1) fail("expected one image chunk");
      break;
    case Strategy::ImageText: {
      if (n_text < 1 || n_image < 1) fail("expected text and image");
      const auto pairs = reference_pairs(doc);
      const auto& t = std::get<TextChunk>(*chunks.front());
      const auto* img = std::get_if<ImageChunk>(chunks.back());
      if (img == nullptr) fail("expected a referenced image");
      const bool linked = std::any_of(pairs.begin(), pairs.end(), [&](const auto& p) {
        return p.first->chunk_id == t.chunk_id && p.second->chunk_id == img->chunk_id;
      });
      if (!linked) fail("text does not reference the image");
      break;
    }
    case Strategy::Section: {
      const auto& path = doc.effective_section(order_index(*chunks.front()));
      if (section_members(doc, path) != sel.chunk_ids) fail("not exactly the chunks of one section");
      break;
    }
    case Strategy::CrossParagraph: {
      if (n_image != 0 || chunks.size() < 2 || chunks.size() > 4) fail("expected 2-4 text chunks");
      for (std::size_t a = 0; a < chunks.size(); ++a) {
        for (std::size_t b = a + 1; b < chunks.size(); ++b) {
          if (!far_apart(order_index(*chunks[a]), order_index(*chunks[b]))) fail("adjacent paragraphs");
          if (context.cache != nullptr) {
            const auto va = text_vector(context, std::get<TextChunk>(*chunks[a]));
            const auto vb = text_vector(context, std::get<TextChunk>(*chunks[b]));
            if (!va || !vb) fail("missing cached vector");
            if (cosine_similarity(va->vector, vb->vector) < context.theta_rel) fail("paragraphs not related");
          }
        }
      }
      break;
    }
  }
}

// --- templates ---------------------------------------------------------------------

const TemplateLibrary& TemplateLibrary::builtin() {
  static const TemplateLibrary lib = [] {
    using namespace templates;
    TemplateLibrary l;
    const auto train = Split::Train;
    const auto test = Split::Test;
    l.add(Strategy::TextOnly, train, Phase::QA, {"text-only/train", kTextOnlyTrain});
    l.add(Strategy::ImageOnly, train, Phase::QA, {"text-only/train", kTextOnlyTrain});
    l.add(Strategy::ImageText, train, Phase::QA, {"text-image/train", kTextImageTrain});
    l.add(Strategy::Section, train, Phase::QA, {"section/train", kSectionTrain});
    l.add(Strategy::CrossParagraph, train, Phase::Question, {"cross-paragraph/train/question", kCrossQuestionTrain});
    l.add(Strategy::CrossParagraph, train, Phase::Answer, {"cross-paragraph/train/answer", kCrossAnswerTrain});

    l.add(Strategy::TextOnly, test, Phase::Question, {"text-only/test/question", kTextOnlyTestQuestion});
    l.add(Strategy::TextOnly, test, Phase::AnswerConcise, {"text-only/test/answer1", kTextOnlyTestAnswer1});
    l.add(Strategy::TextOnly, test, Phase::AnswerKeywords, {"text-only/test/answer2", kTextOnlyTestAnswer2});
    for (const auto s : {Strategy::ImageOnly, Strategy::ImageText}) {
      l.add(s, test, Phase::Question, {"text-image/test/question", kTextImageTestQuestion});
      l.add(s, test, Phase::AnswerConcise, {"text-image/test/answer1", kTextImageTestAnswer1});
      l.add(s, test, Phase::AnswerKeywords, {"text-image/test/answer2", kTextImageTestAnswer2});
    }
    l.add(Strategy::Section, test, Phase::Question, {"section/test/question", kSectionTestQuestion});
    l.add(Strategy::Section, test, Phase::AnswerConcise, {"section/test/answer1", kSectionTestAnswer1});
    l.add(Strategy::Section, test, Phase::AnswerKeywords, {"section/test/answer2", kSectionTestAnswer2});
    return l;
  }();
  return lib;
}

void TemplateLibrary::add(Strategy strategy, Split split, Phase phase, PromptTemplate t) {
  templates_[{strategy, split, phase}] = std::move(t);
}

bool TemplateLibrary::has(Strategy strategy, Split split, Phase phase) const {
  return templates_.count({strategy, split, phase}) != 0;
}

const PromptTemplate& TemplateLibrary::get(Strategy strategy, Split split, Phase phase) const {
  const auto it = templates_.find({strategy, split, phase});
  if (it == templates_.end()) {
    throw TemplateError(std::string("no template for ") + strategy_name(strategy) + "/" + split_name(split) + "/" +
                        phase_name(phase));
  }
  return it->second;
}

namespace {

std::string render_material(const EvidenceSelection& sel, const ParsedDocument& doc) {
  std::string out;
  for (const auto& id : sel.chunk_ids) {
    const auto* c = doc.find(id);
    if (c == nullptr) throw IntegrityError("selection chunk " + id + " not in " + doc.doc_id());
    if (!out.empty()) out += "\n\n";
    if (const auto* t = std::get_if<TextChunk>(c)) {
      if (sel.strategy == Strategy::CrossParagraph) out += "[idx " + std::to_string(t->order_index) + "]: ";
      out += t->text;
    } else {
      const auto& img = std::get<ImageChunk>(*c);
      out += "<image " + img.image_ref.hash + ">";
      if (img.figure_label) out += " " + *img.figure_label + ":";
      if (!img.caption.empty()) out += " " + img.caption;
    }
  }
  return out;
}

std::string render_questions(const std::vector<std::string>& questions) {
  if (questions.size() == 1) return questions.front();
  std::string out;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (i != 0) out += "\n";
    out += "[Q" + std::to_string(i + 1) + "]: " + questions[i];
  }
  return out;
}

void substitute(std::string& text, const std::string& placeholder, const std::string& value) {
  const auto at = text.find(placeholder);
  if (at == std::string::npos) {
    if (!value.empty()) text += "\n\n" + value;
    return;
  }
  text.replace(at, placeholder.size(), value);
}

}  // namespace

PromptAssembly build_prompt(const EvidenceSelection& selection, const ParsedDocument& doc,
                            const TemplateLibrary& library, Split split, Phase phase,
                            const std::vector<std::string>& questions) {
  const auto& t = library.get(selection.strategy, split, phase);
  std::string body = t.text;
  substitute(body, "{material}", render_material(selection, doc));
  substitute(body, "{questions}", render_questions(questions));
  return instruction_prompt(t.id, std::move(body));
}

// --- parsing -----------------------------------------------------------------------

namespace {

bool is_quit(std::string_view s) {
  std::string t = text::to_lower_ascii(text::trim(s));
  std::erase_if(t, [](char c) { return c == '\'' || c == '"' || c == '`' || c == '.'; });
  return text::trim(t) == "quit";
}

struct Block {
  std::string tag;  // "Q", "Q2", "A11", "thinking"
  std::string content;
};

std::vector<Block> split_blocks(std::string_view raw) {
  static const std::regex marker(R"(\[(thinking procedure|Q\d*|A\d*)\]\s*:)", std::regex::icase);
  const std::string s(raw);
  std::vector<Block> out;
  std::size_t content_start = std::string::npos;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), marker); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    if (!out.empty()) {
      out.back().content = text::trim(std::string_view(s).substr(content_start, static_cast<std::size_t>(m.position(0)) - content_start));
    }
    std::string tag = m[1].str();
    if (tag.size() > 1 && (tag[0] == 't' || tag[0] == 'T')) {
      tag = "thinking";
    } else {
      tag[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(tag[0])));
    }
    out.push_back({tag, {}});
    content_start = static_cast<std::size_t>(m.position(0) + m.length(0));
  }
  if (!out.empty()) out.back().content = text::trim(std::string_view(s).substr(content_start));
  return out;
}

}  // namespace

std::vector<GeneratedQA> parse_generation(std::string_view raw, MarkerLayout layout) {
  if (is_quit(raw)) throw SkipDocumentSignal("generator returned quit");
  auto blocks = split_blocks(raw);
  std::erase_if(blocks, [](const Block& b) { return b.tag == "thinking" || b.content.empty(); });
  if (blocks.empty()) {
    std::istringstream lines{std::string(raw)};
    for (std::string line; std::getline(lines, line);) {
      if (is_quit(line)) throw SkipDocumentSignal("generator returned quit");
    }
    throw GenerationParseError("no [Q]/[A] markers in generation");
  }

  std::vector<GeneratedQA> out;
  auto index_of = [](const std::string& tag) -> std::size_t {
    return tag.size() == 1 ? 1 : static_cast<std::size_t>(std::stoul(tag.substr(1)));
  };
  switch (layout) {
    case MarkerLayout::QuestionsOnly:
      for (const auto& b : blocks) {
        if (b.tag[0] == 'Q') out.push_back({b.content, {}});
      }
      break;
    case MarkerLayout::AnswerVariants: {
      GeneratedQA qa;
      for (const auto& b : blocks) {
        if (b.tag[0] == 'A') qa.answers.push_back(b.content);
      }
      if (!qa.answers.empty()) out.push_back(std::move(qa));
      break;
    }
    case MarkerLayout::AnswersPerQuestion: {
      for (const auto& b : blocks) {
        if (b.tag[0] != 'A') continue;
        const auto n = index_of(b.tag);
        if (n == 0 || n > 64) continue;
        if (out.size() < n) out.resize(n);
        out[n - 1].answers.push_back(b.content);
      }
      break;
    }
    case MarkerLayout::QuestionAnswer: {
      std::map<std::size_t, GeneratedQA> by_index;
      std::map<std::size_t, std::map<std::size_t, std::string>> variants;
      std::size_t last_q = 0;
      for (const auto& b : blocks) {
        if (b.tag[0] == 'Q') {
          last_q = index_of(b.tag);
          by_index[last_q].question = b.content;
          continue;
        }
        const auto digits = b.tag.substr(1);
        if (digits.size() == 2) {
          variants[static_cast<std::size_t>(digits[0] - '0')][static_cast<std::size_t>(digits[1] - '0')] = b.content;
        } else if (digits.empty()) {
          by_index[last_q].answers.push_back(b.content);
        } else {
          by_index[index_of(b.tag)].answers.push_back(b.content);
        }
      }
      for (auto& [n, vs] : variants) {
        for (auto& [v, content] : vs) by_index[n].answers.push_back(std::move(content));
      }
      for (auto& [n, qa] : by_index) {
        if (!qa.question.empty() && !qa.answers.empty()) out.push_back(std::move(qa));
      }
      break;
    }
  }
  const bool any = std::any_of(out.begin(), out.end(),
                               [](const GeneratedQA& q) { return !q.question.empty() || !q.answers.empty(); });
  if (!any) throw GenerationParseError("no extractable question/answer pairs");
  return out;
}

// --- filtering ---------------------------------------------------------------------

std::vector<FilterRule> default_filter_rules(const FilterParams& p) {
  std::vector<FilterRule> rules;
  rules.push_back({"non_english", "ASCII share of question and answers below " + std::to_string(p.min_ascii_ratio),
                   [p](const QAPair& q) {
                     std::string all = q.question;
                     for (const auto& a : q.answers) all += " " + a;
                     return text::ascii_ratio(all) >= p.min_ascii_ratio;
                   }});
  rules.push_back({"too_short_question", "question shorter than " + std::to_string(p.min_question_tokens) + " tokens",
                   [p](const QAPair& q) { return text::word_tokens(q.question).size() >= p.min_question_tokens; }});
  rules.push_back({"not_a_question", "question does not end with '?'", [](const QAPair& q) {
                     const auto t = text::trim(q.question);
                     return !t.empty() && t.back() == '?';
                   }});
  rules.push_back({"too_long_answer",
                   "concise answer over " + std::to_string(p.max_concise_answer_tokens) + " or detailed answer over " +
                       std::to_string(p.max_detailed_answer_tokens) + " tokens",
                   [p](const QAPair& q) {
                     for (std::size_t i = 0; i < q.answers.size(); ++i) {
                       const bool concise = i == 0 && q.answers.size() >= 2;
                       const auto limit = concise ? p.max_concise_answer_tokens : p.max_detailed_answer_tokens;
                       if (text::word_tokens(q.answers[i]).size() > limit) return false;
                     }
                     return true;
                   }});
  return rules;
}

FilterOutcome filter_qa(std::vector<QAPair> pairs, const std::vector<FilterRule>& rules) {
  FilterOutcome out;
  for (auto& p : pairs) {
    p.rejection.clear();
    for (const auto& r : rules) {
      if (!r.passes(p)) {
        p.rejection = r.rule_id;
        break;
      }
    }
    (p.kept() ? out.kept : out.rejected).push_back(std::move(p));
  }
  return out;
}

// --- corpus files ------------------------------------------------------------------

CorpusRecord to_record(const QAPair& p) {
  return CorpusRecord{p.id, p.evidence.doc_id, p.evidence.strategy, p.question, p.answers, p.evidence.chunk_ids,
                      p.split, p.generator_id};
}

std::string encode_record(const CorpusRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["doc_id"] = r.doc_id;
  j["strategy"] = strategy_name(r.strategy);
  j["question"] = r.question;
  j["answers"] = r.answers;
  j["evidence"] = r.evidence;
  j["split"] = split_name(r.split);
  j["generator"] = r.generator;
  return j.dump();
}

CorpusRecord decode_record(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    CorpusRecord r;
    r.id = j.at("id").get<std::string>();
    r.doc_id = j.at("doc_id").get<std::string>();
    r.strategy = parse_strategy(j.at("strategy").get<std::string>());
    r.question = j.at("question").get<std::string>();
    r.answers = j.at("answers").get<std::vector<std::string>>();
    r.evidence = j.at("evidence").get<std::vector<std::string>>();
    r.split = parse_split(j.at("split").get<std::string>());
    r.generator = j.at("generator").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad corpus record: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("bad corpus record: ") + e.what());
  }
}

std::size_t CorpusStats::count(Strategy s, Split split) const {
  const auto it = counts.find({s, split});
  return it == counts.end() ? 0 : it->second;
}

std::string CorpusStats::table() const {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-9s %-16s %9s %7s\n", "Category", "Strategy", "Training", "Test");
  out << line;
  const char* last_category = "";
  std::size_t train_total = 0;
  std::size_t test_total = 0;
  for (const auto& i : kStrategies) {
    const auto tr = count(i.strategy, Split::Train);
    const auto te = count(i.strategy, Split::Test);
    train_total += tr;
    test_total += te;
    const bool first = std::string_view(last_category) != i.category;
    std::snprintf(line, sizeof line, "%-9s %-16s %9zu %7zu\n", first ? i.category : "", i.display, tr, te);
    out << line;
    last_category = i.category;
  }
  std::snprintf(line, sizeof line, "%-9s %-16s %9zu %7zu\n", "Total", "", train_total, test_total);
  out << line;
  return out.str();
}

CorpusStats corpus_stats(const std::vector<CorpusRecord>& records) {
  CorpusStats s;
  for (const auto& r : records) ++s.counts[{r.strategy, r.split}];
  return s;
}

CorpusStats export_corpus(const std::vector<QAPair>& pairs, Split split, const std::filesystem::path& out,
                          const DocumentLookup& lookup) {
  std::vector<CorpusRecord> records;
  std::string body;
  for (const auto& p : pairs) {
    if (!p.kept() || p.split != split) continue;
    if (p.evidence.chunk_ids.empty()) throw IntegrityError("pair " + p.id + " has no evidence");
    if (lookup) {
      const auto* doc = lookup(p.evidence.doc_id);
      if (doc == nullptr) throw IntegrityError("pair " + p.id + " cites unknown document " + p.evidence.doc_id);
      for (const auto& id : p.evidence.chunk_ids) {
        if (doc->find(id) == nullptr) throw IntegrityError("pair " + p.id + " cites unknown chunk " + id);
      }
    }
    records.push_back(to_record(p));
    body += encode_record(records.back());
    body += '\n';
  }
  write_file_atomic(out, body);
  return corpus_stats(records);
}

std::vector<CorpusRecord> import_corpus(const std::filesystem::path& in) {
  const auto data = read_file(in);
  std::vector<CorpusRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < data.size()) {
    auto end = data.find('\n', pos);
    if (end == std::string::npos) end = data.size();
    ++line_no;
    const std::string_view line(data.data() + pos, end - pos);
    pos = end + 1;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(decode_record(line));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no, 1);
    }
  }
  return out;
}

// --- pipeline ----------------------------------------------------------------------

TokenBucket::TokenBucket(double rate_per_second, double burst)
    : rate_(rate_per_second), burst_(std::max(1.0, burst)), tokens_(std::max(1.0, burst)), last_(Clock::now()) {}

void TokenBucket::refill(Clock::time_point now) {
  if (now <= last_) return;
  const double elapsed = std::chrono::duration<double>(now - last_).count();
  tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
  last_ = now;
}

bool TokenBucket::try_acquire(Clock::time_point now) {
  std::lock_guard lock(mutex_);
  if (rate_ <= 0.0) return true;
  refill(now);
  if (tokens_ < 1.0) return false;
  tokens_ -= 1.0;
  return true;
}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  for (;;) {
    double wait_s = 0.0;
    {
      std::lock_guard lock(mutex_);
      refill(Clock::now());
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait_s = (1.0 - tokens_) / rate_;
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
  }
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, const std::string& doc_id, Strategy s, std::size_t index) {
  const auto d = sha256(std::to_string(seed) + '\0' + doc_id + '\0' + strategy_name(s) + '\0' + std::to_string(index));
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out = (out << 8) | d[static_cast<std::size_t>(i)];
  return out;
}

struct DocOutput {
  std::vector<QAPair> pairs;
  std::vector<SkippedSelection> skipped;
};

class Generator {
 public:
  Generator(LlmBackend& backend, TokenBucket& bucket, const RetryPolicy& retry)
      : backend_(backend), bucket_(bucket), retry_(retry) {}

  std::string operator()(const PromptAssembly& prompt) {
    bucket_.acquire();
    GenerateOptions opts;
    opts.retry = retry_;
    return generate_answer(backend_, prompt, opts).answer_text;
  }

 private:
  LlmBackend& backend_;
  TokenBucket& bucket_;
  const RetryPolicy& retry_;
};

std::vector<GeneratedQA> run_phases(const EvidenceSelection& sel, const ParsedDocument& doc,
                                    const TemplateLibrary& lib, Split split, Generator& gen) {
  if (split == Split::Train) {
    if (sel.strategy != Strategy::CrossParagraph) {
      return parse_generation(gen(build_prompt(sel, doc, lib, split, Phase::QA)), MarkerLayout::QuestionAnswer);
    }
    const auto qs = parse_generation(gen(build_prompt(sel, doc, lib, split, Phase::Question)), MarkerLayout::QuestionsOnly);
    const auto& question = qs.front().question;
    auto answers = parse_generation(gen(build_prompt(sel, doc, lib, split, Phase::Answer, {question})),
                                    MarkerLayout::AnswerVariants);
    return {GeneratedQA{question, answers.front().answers}};
  }
  auto qs = parse_generation(gen(build_prompt(sel, doc, lib, split, Phase::Question)), MarkerLayout::QuestionsOnly);
  std::vector<std::string> questions;
  for (const auto& q : qs) questions.push_back(q.question);
  const auto concise = parse_generation(gen(build_prompt(sel, doc, lib, split, Phase::AnswerConcise, questions)),
                                        MarkerLayout::AnswersPerQuestion);
  const auto keywords = parse_generation(gen(build_prompt(sel, doc, lib, split, Phase::AnswerKeywords, questions)),
                                         MarkerLayout::AnswersPerQuestion);
  std::vector<GeneratedQA> out;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    GeneratedQA qa{questions[i], {}};
    if (i < concise.size() && !concise[i].answers.empty()) qa.answers.push_back(concise[i].answers.front());
    if (i < keywords.size() && !keywords[i].answers.empty()) qa.answers.push_back(keywords[i].answers.front());
    if (!qa.answers.empty()) out.push_back(std::move(qa));
  }
  if (out.empty()) throw GenerationParseError("no answered questions");
  return out;
}

DocOutput process_document(const ParsedDocument& doc, const TemplateLibrary& lib, const SelectionContext& ctx,
                           const BuilderConfig& config, Generator& gen, const std::string& generator_id) {
  DocOutput out;
  for (const auto strategy : config.strategies) {
    for (std::size_t i = 0; i < config.selections_per_strategy; ++i) {
      try {
        const auto sel = select_evidence(doc, strategy, derive_seed(config.seed, doc.doc_id(), strategy, i), ctx);
        const auto qas = run_phases(sel, doc, lib, config.split, gen);
        for (std::size_t n = 0; n < qas.size(); ++n) {
          QAPair p;
          p.id = "qa-" + sha256_hex(doc.doc_id() + '\0' + strategy_name(strategy) + '\0' + split_name(config.split) +
                                    '\0' + std::to_string(i) + '\0' + std::to_string(n))
                             .substr(0, 16);
          p.question = qas[n].question;
          p.answers = qas[n].answers;
          p.evidence = sel;
          p.generator_id = generator_id;
          p.split = config.split;
          out.pairs.push_back(std::move(p));
        }
      } catch (const StrategyUnsatisfiableError& e) {
        out.skipped.push_back({doc.doc_id(), strategy, e.what()});
        break;
      } catch (const SkipDocumentSignal& e) {
        out.skipped.push_back({doc.doc_id(), strategy, e.what()});
      } catch (const GenerationParseError& e) {
        out.skipped.push_back({doc.doc_id(), strategy, e.what()});
      }
    }
  }
  return out;
}

}  // namespace

BuildResult build_dataset(const std::vector<const ParsedDocument*>& docs, LlmBackend& backend,
                          const TemplateLibrary& library, const SelectionContext& context,
                          const BuilderConfig& config) {
  TokenBucket bucket(config.rate_per_second, config.burst);
  Generator gen(backend, bucket, config.retry);
  const auto generator_id = backend.backend_id();

  std::vector<DocOutput> outputs(docs.size());
  std::vector<std::exception_ptr> errors(docs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < docs.size(); i = next++) {
      try {
        outputs[i] = process_document(*docs[i], library, context, config, gen, generator_id);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_workers = std::min<std::size_t>(std::max<std::size_t>(1, config.max_in_flight), docs.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_workers; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BuildResult result;
  const auto rules = default_filter_rules(config.filter);
  for (auto& o : outputs) {
    auto filtered = filter_qa(std::move(o.pairs), rules);
    std::move(filtered.kept.begin(), filtered.kept.end(), std::back_inserter(result.kept));
    std::move(filtered.rejected.begin(), filtered.rejected.end(), std::back_inserter(result.rejected));
    std::move(o.skipped.begin(), o.skipped.end(), std::back_inserter(result.skipped));
  }
  return result;
}

}  // namespace wukong
