#include "caqrsim/collectives.hpp"

#include <cassert>
#include <map>
#include <stdexcept>

namespace caqrsim::coll {

int ceil_log2(int p) {
  int d = 0;
  int v = 1;
  while (v < p) {
    v *= 2;
    ++d;
  }
  return d;
}

Variant pick_variant(int p, long long block_words) {
  const long long tree_words = block_words * ceil_log2(p);
  return tree_words <= block_words + p ? Variant::Binomial
                                       : Variant::BidirectionalExchange;
}

namespace {

// Sets split as ceil/floor with lower-numbered ranks in the first set.
void tree_edges_rec(int lo, int hi, int root,
                    std::vector<std::pair<int, int>>& out) {
  const int size = hi - lo;
  if (size <= 1) return;
  const int mid = lo + (size + 1) / 2;
  const bool root_in_first = root < mid;
  const int own_lo = root_in_first ? lo : mid;
  const int other_lo = root_in_first ? mid : lo;
  const int other_size = root_in_first ? hi - mid : mid - lo;
  const int rp = other_lo + (root - own_lo) % other_size;
  if (root_in_first) {
    tree_edges_rec(lo, mid, root, out);
    tree_edges_rec(mid, hi, rp, out);
  } else {
    tree_edges_rec(lo, mid, rp, out);
    tree_edges_rec(mid, hi, root, out);
  }
  out.emplace_back(rp, root);
}

long long total_words(const std::vector<const Block*>& parts) {
  long long w = 0;
  for (const auto* b : parts) w += static_cast<long long>(b->size());
  return w;
}

// Sends the concatenation of `parts` (empty messages elided) and scatters
// the delivered words back into `dests` in order.
void move_blocks(Machine& m, int src_proc, int dst_proc,
                 const std::vector<const Block*>& parts,
                 const std::vector<Block*>& dests) {
  assert(parts.size() == dests.size());
  if (total_words(parts) == 0) {
    for (std::size_t i = 0; i < parts.size(); ++i) *dests[i] = *parts[i];
    return;
  }
  Block payload;
  for (const auto* b : parts) payload.insert(payload.end(), b->begin(), b->end());
  const Block delivered = m.exchange(src_proc, dst_proc, std::move(payload));
  std::size_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::size_t len = parts[i]->size();
    dests[i]->assign(delivered.begin() + off, delivered.begin() + off + len);
    off += len;
  }
}

struct BinomialCtx {
  Machine* m;
  const std::vector<int>* group;
};

void scatter_rec(const BinomialCtx& ctx, int lo, int hi, int root,
                 std::vector<Block>& held) {
  const int size = hi - lo;
  if (size <= 1) return;
  const int mid = lo + (size + 1) / 2;
  const bool root_in_first = root < mid;
  const int own_lo = root_in_first ? lo : mid;
  const int other_lo = root_in_first ? mid : lo;
  const int other_hi = root_in_first ? hi : mid;
  const int other_size = other_hi - other_lo;
  const int rp = other_lo + (root - own_lo) % other_size;
  std::vector<const Block*> parts;
  std::vector<Block*> dests;
  std::vector<Block> tmp(static_cast<std::size_t>(other_size));
  for (int r = other_lo; r < other_hi; ++r) {
    parts.push_back(&held[static_cast<std::size_t>(r)]);
    dests.push_back(&tmp[static_cast<std::size_t>(r - other_lo)]);
  }
  move_blocks(*ctx.m, (*ctx.group)[static_cast<std::size_t>(root)],
              (*ctx.group)[static_cast<std::size_t>(rp)], parts, dests);
  for (int r = other_lo; r < other_hi; ++r) {
    held[static_cast<std::size_t>(r)] =
        std::move(tmp[static_cast<std::size_t>(r - other_lo)]);
  }
  if (root_in_first) {
    scatter_rec(ctx, lo, mid, root, held);
    scatter_rec(ctx, mid, hi, rp, held);
  } else {
    scatter_rec(ctx, lo, mid, rp, held);
    scatter_rec(ctx, mid, hi, root, held);
  }
}

} // namespace

std::vector<std::pair<int, int>> reduce_tree_edges(int p, int root_rank) {
  if (root_rank < 0 || root_rank >= p) {
    throw std::invalid_argument("reduce_tree_edges: bad root");
  }
  std::vector<std::pair<int, int>> edges;
  tree_edges_rec(0, p, root_rank, edges);
  return edges;
}

std::vector<Block> scatter(Machine& m, const std::vector<int>& group,
                           int root_rank, const std::vector<Block>& blocks) {
  const int p = static_cast<int>(group.size());
  if (static_cast<int>(blocks.size()) != p) {
    throw std::invalid_argument("scatter: one block per rank required");
  }
  std::vector<Block> held = blocks; // logically at the root initially
  BinomialCtx ctx{&m, &group};
  scatter_rec(ctx, 0, p, root_rank, held);
  return held;
}

std::vector<Block> gather(Machine& m, const std::vector<int>& group,
                          int root_rank, const std::vector<Block>& blocks) {
  const int p = static_cast<int>(group.size());
  if (static_cast<int>(blocks.size()) != p) {
    throw std::invalid_argument("gather: one block per rank required");
  }
  // Head recursion: run the sub-gathers, then each sub-root forwards
  // everything it holds. held[rank] = blocks gathered at `rank` so far,
  // keyed by source rank.
  std::vector<std::map<int, Block>> held(static_cast<std::size_t>(p));
  for (int r = 0; r < p; ++r) {
    held[static_cast<std::size_t>(r)][r] = blocks[static_cast<std::size_t>(r)];
  }
  for (const auto& [sender, receiver] : reduce_tree_edges(p, root_rank)) {
    auto& src_held = held[static_cast<std::size_t>(sender)];
    std::vector<const Block*> parts;
    std::vector<int> srcs;
    for (const auto& [src, blk] : src_held) {
      parts.push_back(&blk);
      srcs.push_back(src);
    }
    std::vector<Block> tmp(parts.size());
    std::vector<Block*> dests;
    for (auto& t : tmp) dests.push_back(&t);
    move_blocks(m, group[static_cast<std::size_t>(sender)],
                group[static_cast<std::size_t>(receiver)], parts, dests);
    auto& dst_held = held[static_cast<std::size_t>(receiver)];
    for (std::size_t i = 0; i < srcs.size(); ++i) {
      dst_held[srcs[i]] = std::move(tmp[i]);
    }
    src_held.clear();
  }
  std::vector<Block> out(static_cast<std::size_t>(p));
  for (auto& [src, blk] : held[static_cast<std::size_t>(root_rank)]) {
    out[static_cast<std::size_t>(src)] = std::move(blk);
  }
  return out;
}

namespace {

Block broadcast_binomial(Machine& m, const std::vector<int>& group,
                         int root_rank, const Block& block) {
  // Tail recursion: the scatter schedule is the reduce edges reversed.
  auto edges = reduce_tree_edges(static_cast<int>(group.size()), root_rank);
  std::vector<Block> held(group.size());
  held[static_cast<std::size_t>(root_rank)] = block;
  for (auto it = edges.rbegin(); it != edges.rend(); ++it) {
    const int receiver = it->first;  // reversed direction
    const int sender = it->second;
    std::vector<const Block*> parts{
        &held[static_cast<std::size_t>(sender)]};
    std::vector<Block*> dests{&held[static_cast<std::size_t>(receiver)]};
    move_blocks(m, group[static_cast<std::size_t>(sender)],
                group[static_cast<std::size_t>(receiver)], parts, dests);
  }
  return block;
}

Block reduce_binomial(Machine& m, const std::vector<int>& group, int root_rank,
                      const std::vector<Block>& blocks) {
  std::vector<Block> acc = blocks;
  for (const auto& [sender, receiver] :
       reduce_tree_edges(static_cast<int>(group.size()), root_rank)) {
    auto& src = acc[static_cast<std::size_t>(sender)];
    auto& dst = acc[static_cast<std::size_t>(receiver)];
    Block tmp;
    std::vector<const Block*> parts{&src};
    std::vector<Block*> dests{&tmp};
    move_blocks(m, group[static_cast<std::size_t>(sender)],
                group[static_cast<std::size_t>(receiver)], parts, dests);
    if (dst.size() < tmp.size()) dst.resize(tmp.size(), 0.0);
    for (std::size_t i = 0; i < tmp.size(); ++i) dst[i] += tmp[i];
    if (!tmp.empty()) {
      m.compute(group[static_cast<std::size_t>(receiver)],
                static_cast<long long>(tmp.size()));
    }
  }
  return acc[static_cast<std::size_t>(root_rank)];
}

// Contiguous balanced split of a block into k segments (first rem larger).
std::vector<Block> split_segments(const Block& b, int k) {
  std::vector<Block> segs(static_cast<std::size_t>(k));
  const std::size_t n = b.size();
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t rem = n % static_cast<std::size_t>(k);
  std::size_t off = 0;
  for (int i = 0; i < k; ++i) {
    const std::size_t len = base + (static_cast<std::size_t>(i) < rem ? 1 : 0);
    segs[static_cast<std::size_t>(i)].assign(b.begin() + off,
                                             b.begin() + off + len);
    off += len;
  }
  return segs;
}

// Bidirectional-exchange ReduceScatter over rank range [lo, hi).
// held[rank][dst] accumulates partial sums for destination `dst`.
void reduce_scatter_rec(Machine& m, const std::vector<int>& group, int lo,
                        int hi, std::vector<std::vector<Block>>& held) {
  const int size = hi - lo;
  if (size <= 1) return;
  const int mid = lo + (size + 1) / 2;
  const int s2 = hi - mid;
  const bool odd = (mid - lo) != s2;

  struct Xfer {
    int sender, receiver;
    std::vector<int> dsts;
    long long id = -1;
    bool empty = true;
  };
  std::vector<Xfer> xfers;
  auto make_xfer = [&](int sender, int receiver, int dst_lo, int dst_hi) {
    Xfer x;
    x.sender = sender;
    x.receiver = receiver;
    for (int d = dst_lo; d < dst_hi; ++d) x.dsts.push_back(d);
    xfers.push_back(std::move(x));
  };
  for (int i = 0; i < s2; ++i) {
    make_xfer(lo + i, mid + i, mid, hi); // first set sends second-set blocks
    make_xfer(mid + i, lo + i, lo, mid);
  }
  if (odd) make_xfer(mid - 1, hi - 1, mid, hi); // extra -> doubly-paired

  // All sends precede all receives in program order.
  for (auto& x : xfers) {
    Block payload;
    for (int d : x.dsts) {
      const auto& b = held[static_cast<std::size_t>(x.sender)]
                          [static_cast<std::size_t>(d)];
      payload.insert(payload.end(), b.begin(), b.end());
    }
    if (!payload.empty()) {
      x.empty = false;
      x.id = m.post(group[static_cast<std::size_t>(x.sender)],
                    group[static_cast<std::size_t>(x.receiver)],
                    std::move(payload));
    }
  }
  for (auto& x : xfers) {
    if (x.empty) continue;
    const Block delivered = m.receive(x.id);
    std::size_t off = 0;
    long long adds = 0;
    for (int d : x.dsts) {
      const std::size_t len = held[static_cast<std::size_t>(x.sender)]
                                  [static_cast<std::size_t>(d)].size();
      auto& acc =
          held[static_cast<std::size_t>(x.receiver)][static_cast<std::size_t>(d)];
      if (acc.size() < len) acc.resize(len, 0.0);
      for (std::size_t i = 0; i < len; ++i) acc[i] += delivered[off + i];
      adds += static_cast<long long>(len);
      off += len;
    }
    if (adds > 0) {
      m.compute(group[static_cast<std::size_t>(x.receiver)], adds);
    }
  }
  for (auto& x : xfers) {
    for (int d : x.dsts) {
      held[static_cast<std::size_t>(x.sender)][static_cast<std::size_t>(d)]
          .clear();
    }
  }
  reduce_scatter_rec(m, group, lo, mid, held);
  reduce_scatter_rec(m, group, mid, hi, held);
}

// Bidirectional-exchange AllGather over [lo, hi) (head recursion).
// held[rank][src] is the copy of src's block at `rank`, if present.
void all_gather_rec(Machine& m, const std::vector<int>& group, int lo, int hi,
                    std::vector<std::vector<Block>>& held,
                    const std::vector<std::size_t>& len) {
  const int size = hi - lo;
  if (size <= 1) return;
  const int mid = lo + (size + 1) / 2;
  const int s2 = hi - mid;
  const bool odd = (mid - lo) != s2;
  all_gather_rec(m, group, lo, mid, held, len);
  all_gather_rec(m, group, mid, hi, held, len);

  struct Xfer {
    int sender, receiver;
    int src_lo, src_hi; // ranks whose blocks travel
    long long id = -1;
    bool empty = true;
  };
  std::vector<Xfer> xfers;
  for (int i = 0; i < s2; ++i) {
    xfers.push_back({lo + i, mid + i, lo, mid});
    xfers.push_back({mid + i, lo + i, mid, hi});
  }
  // Last of the smaller set also sends to the unpaired rank of the
  // larger set, which receives only.
  if (odd) xfers.push_back({hi - 1, mid - 1, mid, hi});

  for (auto& x : xfers) {
    Block payload;
    for (int s = x.src_lo; s < x.src_hi; ++s) {
      const auto& b =
          held[static_cast<std::size_t>(x.sender)][static_cast<std::size_t>(s)];
      payload.insert(payload.end(), b.begin(), b.end());
    }
    if (!payload.empty()) {
      x.empty = false;
      x.id = m.post(group[static_cast<std::size_t>(x.sender)],
                    group[static_cast<std::size_t>(x.receiver)],
                    std::move(payload));
    }
  }
  for (auto& x : xfers) {
    Block delivered;
    if (!x.empty) delivered = m.receive(x.id);
    std::size_t off = 0;
    for (int s = x.src_lo; s < x.src_hi; ++s) {
      const std::size_t l = len[static_cast<std::size_t>(s)];
      auto& dst =
          held[static_cast<std::size_t>(x.receiver)][static_cast<std::size_t>(s)];
      dst.assign(delivered.begin() + off, delivered.begin() + off + l);
      off += l;
    }
  }
}

} // namespace

Block broadcast(Machine& m, const std::vector<int>& group, int root_rank,
                const Block& block, Variant v) {
  const int p = static_cast<int>(group.size());
  if (v == Variant::Auto) {
    v = pick_variant(p, static_cast<long long>(block.size()));
  }
  if (p <= 1) return block;
  if (v == Variant::Binomial) return broadcast_binomial(m, group, root_rank, block);
  // Scatter + AllGather over balanced segments.
  auto segs = split_segments(block, p);
  auto scattered = scatter(m, group, root_rank, segs);
  std::vector<std::size_t> len(static_cast<std::size_t>(p));
  for (int r = 0; r < p; ++r) {
    len[static_cast<std::size_t>(r)] = scattered[static_cast<std::size_t>(r)].size();
  }
  std::vector<std::vector<Block>> held(static_cast<std::size_t>(p),
                                       std::vector<Block>(static_cast<std::size_t>(p)));
  for (int r = 0; r < p; ++r) {
    held[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)] =
        std::move(scattered[static_cast<std::size_t>(r)]);
  }
  all_gather_rec(m, group, 0, p, held, len);
  Block out;
  for (int r = 0; r < p; ++r) {
    const auto& s = held[0][static_cast<std::size_t>(r)];
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

Block reduce(Machine& m, const std::vector<int>& group, int root_rank,
             const std::vector<Block>& blocks, Variant v) {
  const int p = static_cast<int>(group.size());
  if (static_cast<int>(blocks.size()) != p) {
    throw std::invalid_argument("reduce: one block per rank required");
  }
  std::size_t bw = 0;
  for (const auto& b : blocks) bw = std::max(bw, b.size());
  if (v == Variant::Auto) v = pick_variant(p, static_cast<long long>(bw));
  if (p <= 1) return blocks[0];
  if (v == Variant::Binomial) return reduce_binomial(m, group, root_rank, blocks);
  // ReduceScatter + Gather over balanced segments.
  std::vector<std::vector<Block>> segd(static_cast<std::size_t>(p));
  for (int r = 0; r < p; ++r) {
    segd[static_cast<std::size_t>(r)] =
        split_segments(blocks[static_cast<std::size_t>(r)], p);
  }
  auto summed = reduce_scatter(m, group, segd);
  auto at_root = gather(m, group, root_rank, summed);
  Block out;
  for (int r = 0; r < p; ++r) {
    const auto& s = at_root[static_cast<std::size_t>(r)];
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<Block> all_gather(Machine& m, const std::vector<int>& group,
                              const std::vector<Block>& blocks) {
  const int p = static_cast<int>(group.size());
  if (static_cast<int>(blocks.size()) != p) {
    throw std::invalid_argument("all_gather: one block per rank required");
  }
  std::vector<std::size_t> len(static_cast<std::size_t>(p));
  std::vector<std::vector<Block>> held(static_cast<std::size_t>(p),
                                       std::vector<Block>(static_cast<std::size_t>(p)));
  for (int r = 0; r < p; ++r) {
    len[static_cast<std::size_t>(r)] = blocks[static_cast<std::size_t>(r)].size();
    held[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)] =
        blocks[static_cast<std::size_t>(r)];
  }
  all_gather_rec(m, group, 0, p, held, len);
  return held[0];
}

std::vector<Block> reduce_scatter(Machine& m, const std::vector<int>& group,
                                  const std::vector<std::vector<Block>>& blocks) {
  const int p = static_cast<int>(group.size());
  if (static_cast<int>(blocks.size()) != p) {
    throw std::invalid_argument("reduce_scatter: P x P blocks required");
  }
  std::vector<std::vector<Block>> held = blocks;
  reduce_scatter_rec(m, group, 0, p, held);
  std::vector<Block> out(static_cast<std::size_t>(p));
  for (int r = 0; r < p; ++r) {
    out[static_cast<std::size_t>(r)] =
        std::move(held[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)]);
  }
  return out;
}

Block all_reduce(Machine& m, const std::vector<int>& group,
                 const std::vector<Block>& blocks, Variant v) {
  const int p = static_cast<int>(group.size());
  if (static_cast<int>(blocks.size()) != p) {
    throw std::invalid_argument("all_reduce: one block per rank required");
  }
  std::size_t bw = 0;
  for (const auto& b : blocks) bw = std::max(bw, b.size());
  if (v == Variant::Auto) v = pick_variant(p, static_cast<long long>(bw));
  if (p <= 1) return blocks[0];
  if (v == Variant::Binomial) {
    const Block sum = reduce_binomial(m, group, 0, blocks);
    return broadcast(m, group, 0, sum, Variant::Binomial);
  }
  std::vector<std::vector<Block>> segd(static_cast<std::size_t>(p));
  for (int r = 0; r < p; ++r) {
    segd[static_cast<std::size_t>(r)] =
        split_segments(blocks[static_cast<std::size_t>(r)], p);
  }
  auto summed = reduce_scatter(m, group, segd);
  auto everywhere = all_gather(m, group, summed);
  Block out;
  for (int r = 0; r < p; ++r) {
    const auto& s = everywhere[static_cast<std::size_t>(r)];
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

namespace {

struct ElemTag {
  int src;
  int dst;
  long long idx;
};

struct Item {
  int route_dst; // current routing destination rank
  std::vector<double> data;
  std::vector<ElemTag> tags; // one per element of data
};

// Radix-2 index algorithm over arbitrary items. After d = ceil(log2 P)
// steps every item sits at its route_dst.
std::vector<std::vector<Item>> index_route(Machine& m,
                                           const std::vector<int>& group,
                                           std::vector<std::vector<Item>> items) {
  const int p = static_cast<int>(group.size());
  const int d = ceil_log2(p);
  for (int step = 0; step < d; ++step) {
    std::vector<std::vector<Item>> outgoing(static_cast<std::size_t>(p));
    for (int r = 0; r < p; ++r) {
      std::vector<Item> keep;
      for (auto& it : items[static_cast<std::size_t>(r)]) {
        const int dist = ((it.route_dst - r) % p + p) % p;
        if ((dist >> step) & 1) {
          outgoing[static_cast<std::size_t>(r)].push_back(std::move(it));
        } else {
          keep.push_back(std::move(it));
        }
      }
      items[static_cast<std::size_t>(r)] = std::move(keep);
    }
    std::vector<long long> ids(static_cast<std::size_t>(p), -1);
    for (int r = 0; r < p; ++r) {
      Block payload;
      for (const auto& it : outgoing[static_cast<std::size_t>(r)]) {
        payload.insert(payload.end(), it.data.begin(), it.data.end());
      }
      if (!payload.empty()) {
        const int to = (r + (1 << step)) % p;
        ids[static_cast<std::size_t>(r)] =
            m.post(group[static_cast<std::size_t>(r)],
                   group[static_cast<std::size_t>(to)], std::move(payload));
      }
    }
    for (int r = 0; r < p; ++r) {
      const int to = (r + (1 << step)) % p;
      Block delivered;
      if (ids[static_cast<std::size_t>(r)] >= 0) {
        delivered = m.receive(ids[static_cast<std::size_t>(r)]);
      }
      std::size_t off = 0;
      for (auto& it : outgoing[static_cast<std::size_t>(r)]) {
        it.data.assign(delivered.begin() + off,
                       delivered.begin() + off + it.data.size());
        off += it.data.size();
        items[static_cast<std::size_t>(to)].push_back(std::move(it));
      }
    }
  }
  return items;
}

} // namespace

std::vector<std::vector<Block>> all_to_all_index(
    Machine& m, const std::vector<int>& group,
    const std::vector<std::vector<Block>>& blocks) {
  const int p = static_cast<int>(group.size());
  if (static_cast<int>(blocks.size()) != p) {
    throw std::invalid_argument("all_to_all_index: P x P blocks required");
  }
  std::vector<std::vector<Item>> items(static_cast<std::size_t>(p));
  for (int src = 0; src < p; ++src) {
    for (int dst = 0; dst < p; ++dst) {
      const auto& b =
          blocks[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)];
      if (b.empty()) continue;
      Item it;
      it.route_dst = dst;
      it.data = b;
      it.tags.resize(b.size());
      for (std::size_t k = 0; k < b.size(); ++k) {
        it.tags[k] = {src, dst, static_cast<long long>(k)};
      }
      items[static_cast<std::size_t>(src)].push_back(std::move(it));
    }
  }
  items = index_route(m, group, std::move(items));
  std::vector<std::vector<Block>> out(
      static_cast<std::size_t>(p), std::vector<Block>(static_cast<std::size_t>(p)));
  for (int r = 0; r < p; ++r) {
    for (const auto& it : items[static_cast<std::size_t>(r)]) {
      for (std::size_t k = 0; k < it.data.size(); ++k) {
        const auto& tag = it.tags[k];
        auto& blk = out[static_cast<std::size_t>(tag.dst)]
                       [static_cast<std::size_t>(tag.src)];
        const auto need = static_cast<std::size_t>(tag.idx) + 1;
        if (blk.size() < need) blk.resize(need, 0.0);
        blk[static_cast<std::size_t>(tag.idx)] = it.data[k];
      }
    }
  }
  return out;
}

std::vector<std::vector<Block>> all_to_all_two_phase(
    Machine& m, const std::vector<int>& group,
    const std::vector<std::vector<Block>>& blocks) {
  const int p = static_cast<int>(group.size());
  if (static_cast<int>(blocks.size()) != p) {
    throw std::invalid_argument("all_to_all_two_phase: P x P blocks required");
  }
  // Deal each element of block (src -> dst) to intermediate destination
  // (src + dst + index) mod p, then route twice with the index algorithm.
  std::vector<std::vector<Item>> phase1(static_cast<std::size_t>(p));
  for (int src = 0; src < p; ++src) {
    std::vector<Item> by_inter(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) by_inter[static_cast<std::size_t>(i)].route_dst = i;
    for (int dst = 0; dst < p; ++dst) {
      const auto& b =
          blocks[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)];
      for (std::size_t k = 0; k < b.size(); ++k) {
        const int inter =
            static_cast<int>((static_cast<long long>(src) + dst +
                              static_cast<long long>(k)) %
                             p);
        auto& it = by_inter[static_cast<std::size_t>(inter)];
        it.data.push_back(b[k]);
        it.tags.push_back({src, dst, static_cast<long long>(k)});
      }
    }
    for (auto& it : by_inter) {
      if (!it.data.empty()) {
        phase1[static_cast<std::size_t>(src)].push_back(std::move(it));
      }
    }
  }
  auto mid = index_route(m, group, std::move(phase1));
  // Regroup at intermediates by final destination.
  std::vector<std::vector<Item>> phase2(static_cast<std::size_t>(p));
  for (int r = 0; r < p; ++r) {
    std::vector<Item> by_dst(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) by_dst[static_cast<std::size_t>(i)].route_dst = i;
    for (const auto& it : mid[static_cast<std::size_t>(r)]) {
      for (std::size_t k = 0; k < it.data.size(); ++k) {
        auto& o = by_dst[static_cast<std::size_t>(it.tags[k].dst)];
        o.data.push_back(it.data[k]);
        o.tags.push_back(it.tags[k]);
      }
    }
    for (auto& it : by_dst) {
      if (!it.data.empty()) {
        phase2[static_cast<std::size_t>(r)].push_back(std::move(it));
      }
    }
  }
  auto done = index_route(m, group, std::move(phase2));
  std::vector<std::vector<Block>> out(
      static_cast<std::size_t>(p), std::vector<Block>(static_cast<std::size_t>(p)));
  for (int src = 0; src < p; ++src) {
    for (int dst = 0; dst < p; ++dst) {
      out[static_cast<std::size_t>(dst)][static_cast<std::size_t>(src)].resize(
          blocks[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)]
              .size(),
          0.0);
    }
  }
  for (int r = 0; r < p; ++r) {
    for (const auto& it : done[static_cast<std::size_t>(r)]) {
      for (std::size_t k = 0; k < it.data.size(); ++k) {
        const auto& tag = it.tags[k];
        out[static_cast<std::size_t>(tag.dst)][static_cast<std::size_t>(tag.src)]
           [static_cast<std::size_t>(tag.idx)] = it.data[k];
      }
    }
  }
  return out;
}

} // namespace caqrsim::coll
