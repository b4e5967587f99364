#include "wsgg/parser.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "wsgg/io.hpp"

namespace wsgg {

using nlohmann::json;

ParserRuleSet make_rule_set(std::set<std::string> nouns, std::set<std::string> verbs,
                            std::set<std::string> prepositions, std::set<std::string> stopwords,
                            std::map<std::string, std::string> synonyms) {
  ParserRuleSet rules;
  rules.nouns = std::move(nouns);
  rules.verbs = std::move(verbs);
  rules.prepositions = std::move(prepositions);
  rules.stopwords = std::move(stopwords);
  rules.raw_synonyms_ = std::move(synonyms);
  rules.synonyms = SynonymMatcher(rules.raw_synonyms_);
  return rules;
}

ParserRuleSet ParserRuleSet::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open rule set '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": malformed rule set: " + e.what());
  }
  auto as_set = [&j](const char* key) {
    std::set<std::string> s;
    if (j.contains(key)) {
      for (const json& v : j[key]) s.insert(v.get<std::string>());
    }
    return s;
  };
  std::map<std::string, std::string> synonyms;
  if (j.contains("synonyms")) {
    for (const auto& [k, v] : j["synonyms"].items()) synonyms[k] = v.get<std::string>();
  }
  return make_rule_set(as_set("nouns"), as_set("verbs"), as_set("prepositions"),
                       as_set("stopwords"), std::move(synonyms));
}

void ParserRuleSet::to_json_file(const std::string& path) const {
  json j{{"nouns", nouns},
         {"verbs", verbs},
         {"prepositions", prepositions},
         {"stopwords", stopwords},
         {"synonyms", raw_synonyms_}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write rule set '" + path + "'");
  out << j.dump(2) << "\n";
}

std::vector<std::string> tokenize(const std::string& caption) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : caption) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

namespace {

// Suffix-rule singularization; detector labels are singular.
std::vector<std::string> singular_candidates(const std::string& token) {
  std::vector<std::string> out;
  const std::size_t n = token.size();
  if (n > 3 && token.ends_with("ies")) out.push_back(token.substr(0, n - 3) + "y");
  if (n > 3 && (token.ends_with("ses") || token.ends_with("xes") || token.ends_with("zes") ||
                token.ends_with("ches") || token.ends_with("shes"))) {
    out.push_back(token.substr(0, n - 2));
  }
  if (n > 2 && token.back() == 's' && !token.ends_with("ss")) out.push_back(token.substr(0, n - 1));
  return out;
}

}  // namespace

std::optional<std::string> noun_lemma(const std::string& token, const ParserRuleSet& rules) {
  std::string canon = rules.synonyms.canonicalize(token);
  if (rules.nouns.count(canon)) return canon;
  for (const std::string& singular : singular_candidates(canon)) {
    std::string c = rules.synonyms.canonicalize(singular);
    if (rules.nouns.count(c)) return c;
  }
  return std::nullopt;
}

UnlocalizedSceneGraph parse_caption(const std::string& caption, const ParserRuleSet& rules) {
  if (tokenize(caption).empty()) {
    throw std::invalid_argument("parse_caption: empty caption");
  }
  const std::vector<std::string> tokens = tokenize(caption);

  UnlocalizedSceneGraph graph;

  // Noun-phrase runs: maximal stretches of lexicon nouns; head is the last
  // token ("young boy" -> "boy", "traffic light" -> "light").
  struct Run {
    int start, end;
    std::string lemma;
  };
  std::vector<Run> runs;
  int i = 0;
  const int n = static_cast<int>(tokens.size());
  while (i < n) {
    auto lemma = noun_lemma(tokens[i], rules);
    if (!lemma) {
      ++i;
      continue;
    }
    int j = i + 1;
    std::string head = *lemma;
    while (j < n) {
      auto next = noun_lemma(tokens[j], rules);
      if (!next) break;
      head = *next;
      ++j;
    }
    runs.push_back({i, j, head});
    i = j;
  }

  for (std::size_t k = 0; k < runs.size(); ++k) {
    TextEntity e;
    e.entity_id = static_cast<int>(k);
    e.embedding_ref = static_cast<int>(k);
    e.lemma = runs[k].lemma;
    e.caption_span = std::make_pair(runs[k].start, runs[k].end);
    graph.entities.push_back(std::move(e));
  }

  // Predicate patterns between adjacent noun phrases, stopwords dropped:
  // verb+preposition, verb, preposition. Anything else yields no edge.
  for (std::size_t k = 0; k + 1 < runs.size(); ++k) {
    std::vector<std::string> between;
    for (int t = runs[k].end; t < runs[k + 1].start; ++t) {
      if (rules.stopwords.count(tokens[t])) continue;
      between.push_back(tokens[t]);
    }
    std::string predicate;
    if (between.size() == 2 && rules.verbs.count(between[0]) &&
        rules.prepositions.count(between[1])) {
      predicate = between[0] + " " + between[1];
    } else if (between.size() == 1 && rules.verbs.count(between[0])) {
      predicate = between[0];
    } else if (between.size() == 1 && rules.prepositions.count(between[0])) {
      predicate = between[0];
    }
    if (!predicate.empty()) {
      graph.edges.push_back({static_cast<int>(k), predicate, static_cast<int>(k + 1)});
    }
  }
  return graph;
}

std::vector<UnlocalizedSceneGraph> ingest_parsed_triplets(const std::string& path,
                                                          const SynonymMatcher& synonyms) {
  std::vector<UnlocalizedSceneGraph> graphs = io::read_graphs_jsonl(path);
  for (UnlocalizedSceneGraph& g : graphs) {
    for (TextEntity& e : g.entities) {
      e.lemma = synonyms.canonicalize(e.lemma);
    }
    std::vector<std::string> violations = validate_graph(g);
    if (!violations.empty()) {
      std::string report = "graph for image '" + g.image_id + "' is invalid:";
      for (const std::string& v : violations) report += "\n  " + v;
      throw std::runtime_error(report);
    }
  }
  return graphs;
}

}  // namespace wsgg
