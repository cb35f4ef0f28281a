#pragma once

#include "msgca/data/dataset.hpp"
#include "msgca/data/synth.hpp"
#include "msgca/model.hpp"

namespace msgca::testing {

struct Toy {
  data::Dataset dataset;
  ModelConfig model;
};

/// Small synthetic market for end-to-end model checks.
inline Toy make_toy(std::size_t n_stocks = 6, std::size_t n_days = 16, std::size_t dim = 4, std::size_t ws = 5,
                    std::size_t d = 4, std::uint64_t seed = 0) {
  data::SynthConfig sc;
  sc.n_stocks = n_stocks;
  sc.n_days = n_days;
  sc.dim = dim;
  sc.n_sectors = 2;
  sc.doc_missing_rate = 0.3;
  sc.seed = seed;
  const auto syn = data::synth_dataset(sc);
  Toy toy;
  data::DatasetConfig dc;
  dc.ws = ws;
  toy.dataset = data::build_dataset(syn.prices, syn.documents, syn.embeddings, syn.edges, dc);
  toy.model.d = d;
  toy.model.window = ws;
  toy.model.doc_dim = dim;
  return toy;
}

inline std::vector<const data::WindowSample*> pointers(const std::vector<data::WindowSample>& v, std::size_t from,
                                                       std::size_t count) {
  std::vector<const data::WindowSample*> out;
  for (std::size_t i = from; i < from + count && i < v.size(); ++i) out.push_back(&v[i]);
  return out;
}

}  // namespace msgca::testing
