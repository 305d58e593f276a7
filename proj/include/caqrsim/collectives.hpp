#pragma once

#include "caqrsim/simcore.hpp"

#include <utility>
#include <vector>

namespace caqrsim::coll {

using Block = std::vector<double>;

enum class Variant { Auto, Binomial, BidirectionalExchange };

/// Table-1 selection rule: binomial when B*ceil(log2 P) <= B + P, else
/// bidirectional exchange. Ties go to the binomial tree.
Variant pick_variant(int p, long long block_words);

int ceil_log2(int p);

/// Binomial-tree merge edges (sender_rank -> receiver_rank) in schedule
/// order for a reduce/gather rooted at `root_rank` over ranks [0, p).
/// The reversed list, with directions flipped, is the broadcast/scatter
/// schedule.
std::vector<std::pair<int, int>> reduce_tree_edges(int p, int root_rank);

// All collectives run over `group`, a list of machine processor ids;
// positions within the list are the collective's ranks. Blocks of size
// zero generate no messages.

/// Root holds one outgoing block per rank; each rank ends with its block.
std::vector<Block> scatter(Machine& m, const std::vector<int>& group,
                           int root_rank, const std::vector<Block>& blocks);

/// Each rank contributes one block; the root ends with all of them
/// (returned indexed by source rank).
std::vector<Block> gather(Machine& m, const std::vector<int>& group,
                          int root_rank, const std::vector<Block>& blocks);

Block broadcast(Machine& m, const std::vector<int>& group, int root_rank,
                const Block& block, Variant v = Variant::Auto);

/// Elementwise sum of the ranks' blocks, delivered at the root. Additions
/// follow the fixed tree order of the chosen variant.
Block reduce(Machine& m, const std::vector<int>& group, int root_rank,
             const std::vector<Block>& blocks, Variant v = Variant::Auto);

/// blocks[rank] is each rank's contribution; every rank ends with all of
/// them (result indexed by source rank).
std::vector<Block> all_gather(Machine& m, const std::vector<int>& group,
                              const std::vector<Block>& blocks);

/// blocks[src][dst]; rank q ends with sum over p of blocks[p][q].
std::vector<Block> reduce_scatter(Machine& m, const std::vector<int>& group,
                                  const std::vector<std::vector<Block>>& blocks);

Block all_reduce(Machine& m, const std::vector<int>& group,
                 const std::vector<Block>& blocks, Variant v = Variant::Auto);

/// Radix-2 index algorithm. blocks[src][dst] -> result[dst][src].
std::vector<std::vector<Block>> all_to_all_index(
    Machine& m, const std::vector<int>& group,
    const std::vector<std::vector<Block>>& blocks);

/// Two-phase variant: elements are dealt cyclically to intermediate
/// destinations, then routed by two index-algorithm passes.
std::vector<std::vector<Block>> all_to_all_two_phase(
    Machine& m, const std::vector<int>& group,
    const std::vector<std::vector<Block>>& blocks);

} // namespace caqrsim::coll
