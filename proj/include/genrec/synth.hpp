#pragma once

#include <cstdint>
#include <string>

namespace genrec {

// Synthetic corpora with known structure.
//   chain      every user walks consecutive items (t, t+1, ... mod items)
//              from a random start; the next item is fully determined.
//   clustered  items live in cells (semantic cluster x behavioural block).
//              Titles share words within a cluster only; a user stays in
//              one block and steps through the clusters in order, picking a
//              random item of the current cell at every step.
struct SynthConfig {
  std::string pattern = "chain";
  int items = 200;   // chain: catalog size; clustered: derived from the cell grid
  int users = 0;     // 0 = twice the catalog size
  int min_len = 6;
  int max_len = 12;
  int clusters = 8;
  int blocks = 4;
  int items_per_cell = 4;
  uint64_t seed = 42;

  void validate() const;
};

struct SynthCorpus {
  std::string interactions;  // user TAB item TAB timestamp lines
  std::string metadata;      // item JSON lines
};

SynthCorpus synthesize(const SynthConfig& cfg);

}  // namespace genrec
