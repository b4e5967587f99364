#include "wsgg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <numeric>
#include <stdexcept>

#include "wsgg/rng.hpp"

namespace wsgg {

namespace {

// The first half of any category prefix acts as the subject-capable pool:
// only those categories start relations, so relation existence stays a
// function of the subject's appearance.
const char* kNouns[] = {"person", "dog",   "cat",   "horse", "bird",  "boy",   "girl",
                        "sheep",  "cow",   "man",   "lady",  "bear",  "duck",  "rabbit",
                        "goat",   "car",   "tree",  "chair", "table", "boat",  "house",
                        "bike",   "hat",   "ball",  "book",  "cup",   "bench", "lamp",
                        "truck",  "plane"};
const char* kPredicates[] = {"above", "below", "left of", "right of"};

std::string category_name(int idx) {
  const int known = static_cast<int>(std::size(kNouns));
  if (idx < known) return kNouns[idx];
  return "obj" + std::to_string(idx);
}

std::string predicate_name(int idx) {
  const int known = static_cast<int>(std::size(kPredicates));
  if (idx < known) return kPredicates[idx];
  return "rel" + std::to_string(idx);
}

// Fixed pseudo-random unit vector per (world, tag) pair.
std::vector<double> prototype(std::uint64_t world_seed, const std::string& tag, int dim) {
  Rng rng(substream_seed(world_seed, tag));
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

Box random_box(Rng& rng, double image_size) {
  const double cx = (0.2 + 0.6 * rng.next_double()) * image_size;
  const double cy = (0.2 + 0.6 * rng.next_double()) * image_size;
  const double w = (0.12 + 0.2 * rng.next_double()) * image_size;
  const double h = (0.12 + 0.2 * rng.next_double()) * image_size;
  Box b{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
  b.x1 = std::max(0.0, b.x1);
  b.y1 = std::max(0.0, b.y1);
  b.x2 = std::min(image_size, b.x2);
  b.y2 = std::min(image_size, b.y2);
  return b;
}

double overlap_ratio(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

// Keeps proposals from piling onto each other so density and IoU signals
// stay informative; gives up after a bounded number of tries.
Box spread_box(Rng& rng, double image_size, const std::vector<Box>& taken) {
  Box candidate = random_box(rng, image_size);
  for (int attempt = 0; attempt < 40; ++attempt) {
    bool clear = true;
    for (const Box& other : taken) {
      if (overlap_ratio(candidate, other) > 0.25) {
        clear = false;
        break;
      }
    }
    if (clear) break;
    candidate = random_box(rng, image_size);
  }
  return candidate;
}

}  // namespace

void SynthSpec::validate() const {
  if (num_images < 1) throw std::invalid_argument("SynthSpec: need at least one image");
  if (proposals_per_image < 1) throw std::invalid_argument("SynthSpec: need at least one proposal per image");
  if (num_categories < 1) throw std::invalid_argument("SynthSpec: need at least one category");
  if (entities_per_image < 1 || entities_per_image > proposals_per_image ||
      entities_per_image > num_categories) {
    throw std::invalid_argument("SynthSpec: entities per image must fit proposals and categories");
  }
  if (edges_per_image > 0 && entities_per_image < 2) {
    throw std::invalid_argument("SynthSpec: edges need at least two entities");
  }
  if (num_predicates < 1) throw std::invalid_argument("SynthSpec: need at least one predicate");
  if (feature_dim < 1 || embed_dim < 1 || expert_dim < 1 || grid_size < 1) {
    throw std::invalid_argument("SynthSpec: dims must be positive");
  }
  if (label_flip_rate < 0.0 || label_flip_rate > 1.0 || map_offset_rate < 0.0 ||
      map_offset_rate > 1.0) {
    throw std::invalid_argument("SynthSpec: rates must lie in [0,1]");
  }
}

LabelSpaces synth_label_spaces(int num_categories, int num_predicates) {
  LabelSpaces labels;
  for (int c = 0; c < num_categories; ++c) labels.objects.push_back(category_name(c));
  for (int p = 0; p < num_predicates; ++p) labels.predicates.push_back(predicate_name(p));
  return labels;
}

SynthDataset synth_dataset(const SynthSpec& spec) {
  spec.validate();
  Rng rng(substream_seed(spec.seed, "generator"));

  SynthDataset data;
  data.labels = synth_label_spaces(spec.num_categories, spec.num_predicates);
  data.embeddings.provider = "synthetic";

  std::vector<std::vector<double>> feat_proto(spec.num_categories), emb_proto(spec.num_categories),
      expert_proto(spec.num_categories);
  for (int c = 0; c < spec.num_categories; ++c) {
    const std::string name = data.labels.objects[c];
    feat_proto[c] = prototype(spec.world_seed, "proto-feat:" + name, spec.feature_dim);
    emb_proto[c] = prototype(spec.world_seed, "proto-emb:" + name, spec.embed_dim);
    expert_proto[c] = prototype(spec.world_seed, "proto-expert:" + name, spec.expert_dim);
  }

  for (int img = 0; img < spec.num_images; ++img) {
    char id_buf[16];
    std::snprintf(id_buf, sizeof(id_buf), "_%04d", img);
    const std::string image_id = spec.id_prefix + id_buf;

    // Entity categories are distinct within an image, the first one always
    // subject-capable so most images carry edges. Distractors prefer unused
    // non-subject categories, keeping relation lookalikes impossible when
    // the category budget allows it.
    const int subject_pool = (spec.num_categories + 1) / 2;
    std::vector<int> subject_cats(subject_pool);
    std::iota(subject_cats.begin(), subject_cats.end(), 0);
    rng.shuffle(subject_cats);
    std::vector<int> other_cats(spec.num_categories - subject_pool);
    std::iota(other_cats.begin(), other_cats.end(), subject_pool);
    rng.shuffle(other_cats);

    std::vector<int> entity_cats{subject_cats[0]};
    {
      std::vector<int> rest(subject_cats.begin() + 1, subject_cats.end());
      rest.insert(rest.end(), other_cats.begin(), other_cats.end());
      rng.shuffle(rest);
      for (int e = 1; e < spec.entities_per_image; ++e) entity_cats.push_back(rest[e - 1]);
    }

    std::vector<bool> used(spec.num_categories, false);
    for (int c : entity_cats) used[c] = true;
    std::vector<int> spare_plain, spare_any;
    for (int c = subject_pool; c < spec.num_categories; ++c) {
      if (!used[c]) spare_plain.push_back(c);
    }
    for (int c = 0; c < spec.num_categories; ++c) {
      if (!used[c]) spare_any.push_back(c);
    }

    const int nv = spec.proposals_per_image;
    struct Draft {
      int true_cat;
      Box box;
      int entity = -1;  // index of the entity this proposal localizes
    };
    std::vector<Draft> drafts;
    std::vector<Box> taken;
    for (int e = 0; e < spec.entities_per_image; ++e) {
      Box b = spread_box(rng, spec.image_size, taken);
      taken.push_back(b);
      drafts.push_back({entity_cats[e], b, e});
    }
    for (int j = spec.entities_per_image; j < nv; ++j) {
      int cat;
      if (!spare_plain.empty()) {
        cat = spare_plain[rng.next_int(static_cast<int>(spare_plain.size()))];
      } else if (!spare_any.empty()) {
        cat = spare_any[rng.next_int(static_cast<int>(spare_any.size()))];
      } else {
        cat = entity_cats[rng.next_int(spec.entities_per_image)];
      }
      Box b = spread_box(rng, spec.image_size, taken);
      taken.push_back(b);
      drafts.push_back({cat, b, -1});
    }

    std::vector<int> perm(nv);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);

    ImageRecord image;
    image.image_id = image_id;
    image.width = spec.image_size;
    image.height = spec.image_size;
    image.proposals.resize(nv);
    std::vector<int> gold(spec.entities_per_image, -1);
    std::vector<int> true_cat_at(nv, -1);
    for (int slot = 0; slot < nv; ++slot) {
      const Draft& d = drafts[perm[slot]];
      RegionProposal p;
      p.box = d.box;
      true_cat_at[slot] = d.true_cat;
      int label_cat = d.true_cat;
      if (spec.label_flip_rate > 0.0 && rng.next_double() < spec.label_flip_rate &&
          spec.num_categories > 1) {
        int other = rng.next_int(spec.num_categories - 1);
        if (other >= label_cat) ++other;
        label_cat = other;
      }
      p.label = data.labels.objects[label_cat];
      p.score = 0.5 + 0.5 * rng.next_double();
      p.feature = feat_proto[d.true_cat];
      for (double& x : p.feature) x += spec.feature_noise * rng.normal();
      image.proposals[slot] = std::move(p);
      if (d.entity >= 0) gold[d.entity] = slot;
    }

    UnlocalizedSceneGraph graph;
    graph.image_id = image_id;
    Mat emb(spec.entities_per_image, spec.embed_dim);
    for (int e = 0; e < spec.entities_per_image; ++e) {
      TextEntity ent;
      ent.entity_id = e;
      ent.embedding_ref = e;
      ent.lemma = data.labels.objects[entity_cats[e]];
      graph.entities.push_back(ent);
      for (int k = 0; k < spec.embed_dim; ++k) {
        emb(e, k) = emb_proto[entity_cats[e]][k] + spec.embed_noise * rng.normal();
      }
    }

    // Relations follow an absolute geometric rule the classifier can
    // recover: a subject-capable entity relates to every entity within half
    // the image size, and the predicate is the dominant-axis direction.
    if (spec.entities_per_image >= 2 && spec.edges_per_image > 0) {
      auto center = [&](int e) {
        const Box& b = drafts[e].box;
        return std::make_pair(0.5 * (b.x1 + b.x2), 0.5 * (b.y1 + b.y2));
      };
      auto direction = [&](int s, int o) {
        const auto [sx, sy] = center(s);
        const auto [ox, oy] = center(o);
        const double dx = ox - sx;
        const double dy = oy - sy;
        int dir;
        if (std::abs(dy) >= std::abs(dx)) {
          dir = dy >= 0.0 ? 1 : 0;  // below : above
        } else {
          dir = dx >= 0.0 ? 3 : 2;  // right of : left of
        }
        return dir % spec.num_predicates;
      };
      struct Candidate {
        double d;
        int s, o;
      };
      std::vector<Candidate> candidates;
      for (int s = 0; s < spec.entities_per_image; ++s) {
        if (entity_cats[s] >= subject_pool) continue;
        for (int o = 0; o < spec.entities_per_image; ++o) {
          if (s == o) continue;
          const auto [sx, sy] = center(s);
          const auto [ox, oy] = center(o);
          const double d = std::hypot(ox - sx, oy - sy);
          if (d < 0.5 * spec.image_size) candidates.push_back({d, s, o});
        }
      }
      std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.d != b.d) return a.d < b.d;
        if (a.s != b.s) return a.s < b.s;
        return a.o < b.o;
      });
      const int cap = std::min<int>(spec.edges_per_image, static_cast<int>(candidates.size()));
      for (int k = 0; k < cap; ++k) {
        const Candidate& c = candidates[k];
        graph.edges.push_back({c.s, data.labels.predicates[direction(c.s, c.o)], c.o});
      }
    }

    // Activation maps: a Gaussian blob on the true box, or on a wrong
    // proposal's box for offset-noised entities.
    const double cell = spec.image_size / spec.grid_size;
    for (int e = 0; e < spec.entities_per_image; ++e) {
      Box target = image.proposals[gold[e]].box;
      if (spec.map_offset_rate > 0.0 && rng.next_double() < spec.map_offset_rate && nv > 1) {
        int other = rng.next_int(nv - 1);
        if (other >= gold[e]) ++other;
        target = image.proposals[other].box;
      }
      const double bx = 0.5 * (target.x1 + target.x2);
      const double by = 0.5 * (target.y1 + target.y2);
      const double sigma = std::max(1.0, spec.map_blur * 0.35 * std::sqrt(target.area()));
      ActivationMap map;
      map.image_id = image_id;
      map.entity_id = e;
      map.grid_h = spec.grid_size;
      map.grid_w = spec.grid_size;
      map.scale_x = cell;
      map.scale_y = cell;
      map.grid.resize(static_cast<std::size_t>(spec.grid_size) * spec.grid_size);
      for (int r = 0; r < spec.grid_size; ++r) {
        for (int c = 0; c < spec.grid_size; ++c) {
          const double px = (c + 0.5) * cell;
          const double py = (r + 0.5) * cell;
          const double d2 = (px - bx) * (px - bx) + (py - by) * (py - by);
          map.grid[static_cast<std::size_t>(r) * spec.grid_size + c] =
              std::exp(-d2 / (2.0 * sigma * sigma));
        }
      }
      data.activation_maps.push_back(std::move(map));
    }

    // Expert embeddings reflect each box's true content; the prompt
    // embedding is the entity category's prototype.
    ExpertEmbeddings expert;
    expert.proposal_embeddings = Mat(nv, spec.expert_dim);
    for (int slot = 0; slot < nv; ++slot) {
      for (int k = 0; k < spec.expert_dim; ++k) {
        expert.proposal_embeddings(slot, k) =
            expert_proto[true_cat_at[slot]][k] + spec.expert_noise * rng.normal();
      }
    }
    expert.entity_prompt_embeddings = Mat(spec.entities_per_image, spec.expert_dim);
    for (int e = 0; e < spec.entities_per_image; ++e) {
      for (int k = 0; k < spec.expert_dim; ++k) {
        expert.entity_prompt_embeddings(e, k) = expert_proto[entity_cats[e]][k];
      }
    }

    ImageGroundTruth gt;
    gt.image_id = image_id;
    for (int e = 0; e < spec.entities_per_image; ++e) {
      gt.objects.push_back({image.proposals[gold[e]].box, data.labels.objects[entity_cats[e]]});
    }
    for (const GraphEdge& edge : graph.edges) {
      gt.triplets.push_back({image.proposals[gold[edge.subject]].box,
                             data.labels.objects[entity_cats[edge.subject]], edge.predicate,
                             image.proposals[gold[edge.object]].box,
                             data.labels.objects[entity_cats[edge.object]]});
    }

    data.images.push_back(std::move(image));
    data.graphs.push_back(std::move(graph));
    data.embeddings.rows_by_image[image_id] = std::move(emb);
    data.expert[image_id] = std::move(expert);
    data.alignments.push_back({image_id, gold});
    data.gt.push_back(std::move(gt));
  }
  return data;
}

}  // namespace wsgg
