#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wsgg/teachers.hpp"
#include "wsgg/types.hpp"

namespace wsgg {

// Deterministic rule-based parser configuration. Patterns fire in fixed
// priority (verb+preposition, verb, preposition) between adjacent noun
// phrases; anything else yields no edge.
struct ParserRuleSet {
  std::set<std::string> nouns;
  std::set<std::string> verbs;
  std::set<std::string> prepositions;
  std::set<std::string> stopwords;
  SynonymMatcher synonyms;

  static ParserRuleSet from_json_file(const std::string& path);
  void to_json_file(const std::string& path) const;

 private:
  friend ParserRuleSet make_rule_set(std::set<std::string>, std::set<std::string>,
                                     std::set<std::string>, std::set<std::string>,
                                     std::map<std::string, std::string>);
  std::map<std::string, std::string> raw_synonyms_;
};

ParserRuleSet make_rule_set(std::set<std::string> nouns, std::set<std::string> verbs,
                            std::set<std::string> prepositions, std::set<std::string> stopwords,
                            std::map<std::string, std::string> synonyms);

// Lowercase/singularize/canonicalize a token; the lexicon lemma when the
// result is a known noun.
std::optional<std::string> noun_lemma(const std::string& token, const ParserRuleSet& rules);

std::vector<std::string> tokenize(const std::string& caption);

// Entities in order of occurrence; edges from subject-predicate-object
// patterns between adjacent noun phrases. Empty caption is an error; a
// caption with no lexicon nouns yields an empty graph.
UnlocalizedSceneGraph parse_caption(const std::string& caption, const ParserRuleSet& rules);

// Loads a graphs JSONL file, lowercases lemmas, applies the synonym map and
// validates every record; throws with the violation report on failure.
std::vector<UnlocalizedSceneGraph> ingest_parsed_triplets(const std::string& path,
                                                          const SynonymMatcher& synonyms);

}  // namespace wsgg
