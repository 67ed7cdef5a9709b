#include <algorithm>
#include <exception>
#include <limits>

#include "mutual/dynonet.hpp"
#include "mutual/error.hpp"

namespace mutual {

Vocab build_vocab(const std::vector<Transcript>& corpus, const Lexicon& lexicon) {
  Vocab vocab;
  for (const auto& t : corpus) {
    if (!t.scenario) throw DataError("transcript " + t.scenario_id + " has no scenario");
    for (const auto& ev : t.events) {
      if (ev.kind != EventKind::utterance) continue;
      const auto toks = tokenize(ev.text);
      for (const auto& lt : link_entities(toks, lexicon, t.scenario->kbs[static_cast<std::size_t>(index_of(ev.agent))]))
        if (!lt.entity) vocab.add(lt.span);
    }
  }
  return vocab;
}

Var example_loss(const DynoNet& model, Tape& tape, const Example& ex, const Lexicon& lexicon, int& n_tokens) {
  const KB& kb = ex.scenario->kbs[static_cast<std::size_t>(index_of(ex.own))];
  DialogueState state(model, tape, *ex.scenario, ex.own);
  std::vector<Var> losses;
  for (const auto& ev : ex.transcript->events) {
    auto toks = event_tokens(ev, ex.own, lexicon, kb, model.vocab());
    if (!toks) continue;
    const bool self = ev.agent == ex.own;
    if (self) losses.push_back(state.decode_loss(*toks, n_tokens));
    state.observe(*toks, self);
  }
  if (losses.empty()) return tape.zeros(1, 1);
  return tape.sum(tape.concat(losses));
}

Split split_corpus(const std::vector<Transcript>& corpus, std::uint64_t seed) {
  std::vector<const Transcript*> ok;
  for (const auto& t : corpus)
    if (t.outcome == Outcome::success) ok.push_back(&t);
  if (ok.empty()) throw DataError("corpus has no successful dialogues");
  Rng rng(seed);
  std::shuffle(ok.begin(), ok.end(), rng.engine());
  Split s;
  const std::size_t n = ok.size();
  const std::size_t n_train = n * 8 / 10, n_dev = n / 10;
  s.train.assign(ok.begin(), ok.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.dev.assign(ok.begin() + static_cast<std::ptrdiff_t>(n_train),
               ok.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev));
  s.test.assign(ok.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev), ok.end());
  return s;
}

std::vector<Example> make_examples(const std::vector<const Transcript*>& dialogues) {
  std::vector<Example> out;
  for (const Transcript* t : dialogues) {
    if (!t->scenario) throw DataError("transcript " + t->scenario_id + " has no scenario");
    out.push_back({t, &*t->scenario, Side::A});
    out.push_back({t, &*t->scenario, Side::B});
  }
  return out;
}

namespace {

// Runs fn(i) for every example in parallel and rethrows the first failure.
template <class Fn>
void parallel_examples(std::size_t n, Fn&& fn) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

double evaluate_loss(const DynoNet& model, const std::vector<Example>& examples, const Lexicon& lexicon) {
  if (examples.empty()) return 0.0;
  std::vector<double> loss(examples.size());
  std::vector<int> tokens(examples.size());
  parallel_examples(examples.size(), [&](std::size_t i) {
    Tape tape(&model.params());
    int n = 0;
    loss[i] = tape.scalar(example_loss(model, tape, examples[i], lexicon, n));
    tokens[i] = n;
  });
  double total = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) total += loss[i], n += tokens[i];
  return n > 0 ? total / static_cast<double>(n) : 0.0;
}

TrainResult train(DynoNet& model, const std::vector<Example>& train_set, const std::vector<Example>& dev_set,
                  const Lexicon& lexicon, const TrainOptions& options) {
  if (train_set.empty()) throw DataError("empty training set");
  const auto& cfg = model.config();
  auto& params = model.params();
  AdaGrad opt(params, cfg.lr, 1e-8, cfg.adagrad_init);
  Rng rng(cfg.seed);

  TrainResult result;
  result.n_train = train_set.size();
  result.n_dev = dev_set.size();
  result.best_dev = std::numeric_limits<double>::infinity();
  ParameterStore best = params;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t B = static_cast<std::size_t>(cfg.batch);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double epoch_loss = 0.0;
    long epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t bs = std::min(B, order.size() - start);
      std::vector<Gradients> grads(bs);
      std::vector<double> loss(bs);
      std::vector<int> tokens(bs);
      parallel_examples(bs, [&](std::size_t i) {
        grads[i] = Gradients(params);
        Tape tape(&params);
        int n = 0;
        Var L = example_loss(model, tape, train_set[order[start + i]], lexicon, n);
        loss[i] = tape.scalar(L);
        tokens[i] = n;
        tape.backward(L, grads[i]);
      });
      long n = 0;
      for (std::size_t i = 0; i < bs; ++i) {
        if (i > 0) grads[0].add(grads[i]);
        epoch_loss += loss[i];
        n += tokens[i];
      }
      epoch_tokens += n;
      if (n == 0) continue;
      grads[0].scale(1.0 / static_cast<double>(n));
      opt.step(params, grads[0]);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_tokens > 0 ? epoch_loss / static_cast<double>(epoch_tokens) : 0.0;
    stats.dev_loss = dev_set.empty() ? stats.train_loss : evaluate_loss(model, dev_set, lexicon);
    result.curve.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);

    if (stats.dev_loss < result.best_dev) {
      result.best_dev = stats.dev_loss;
      result.best_epoch = epoch;
      best = params;
    }
    if (options.stop_when && options.stop_when(stats)) break;
    if (options.use_early_stopping && epoch >= cfg.min_epochs && epoch - result.best_epoch >= cfg.patience) break;
  }
  if (options.use_early_stopping) params = best;
  return result;
}

}  // namespace mutual
