#pragma once

// Deterministic template-based corpus generator. Templates carry innocuous
// surrogate vocabulary; what matters to the engine is the slot structure,
// not the lexicon. Each hateful template also yields near-miss variants
// (one required slot removed) and counter-speech variants (a stance marker
// prepended).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "icsf/dataset.hpp"
#include "icsf/policy.hpp"

namespace icsf {

struct TemplateSpec {
  IntentKind intent = IntentKind::NotHateful;
  // Placeholders name slots, e.g. "{HateEntity} {Support}". A compound
  // placeholder "{Target|ProtectedCharacteristic}" produces one span
  // annotated with several slots; its surface form is drawn from the lexicon
  // of the last listed slot, so dropping that slot in a near-miss variant
  // switches to a disjoint lexicon and keeps labels learnable.
  std::string pattern;
  std::map<SlotKind, std::vector<std::string>> lexicons;
  std::vector<std::string> stance_markers;
  double weight = 1.0;
};

// Built-in specs: one template per hateful intent plus a few neutral
// NotHateful templates.
std::vector<TemplateSpec> default_template_specs();

// Empty iff the specs are usable with this policy: placeholders match the
// intent's required slots exactly (none for the fallback intent), referenced
// lexicons are non-empty, hateful templates carry stance markers.
std::vector<std::string> validate_specs(const std::vector<TemplateSpec>& specs,
                                        const Policy& policy);

struct Generated {
  Corpus corpus;
  CorpusStats expected;  // tallied while generating, independent of re-parsing
};

// n records with exact character-span annotations: 60% hateful across the
// hateful templates, 25% near-miss (one in five of those fully neutral when
// neutral templates exist), 15% counter-speech. Deterministic per seed.
Generated generate_with_ledger(const std::vector<TemplateSpec>& specs, std::size_t n,
                               std::uint64_t seed, const Policy& policy);
Corpus generate(const std::vector<TemplateSpec>& specs, std::size_t n, std::uint64_t seed,
                const Policy& policy);

// JSON spec file: {"templates":[{"intent":str,"pattern":str,
//   "lexicons":{slot:[str,...]},"stance_markers":[str,...],"weight":num},...]}
std::vector<TemplateSpec> load_template_specs(const std::string& path);

}  // namespace icsf
