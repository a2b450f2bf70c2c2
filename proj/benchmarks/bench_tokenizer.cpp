#include <benchmark/benchmark.h>

#include <string>

#include "longctx/corpus.hpp"
#include "longctx/tokenizer.hpp"
#include "longctx/util.hpp"

namespace {

using namespace longctx;

std::string synthetic_text(size_t target_bytes) {
  const char* words[] = {"the", "quick", "brown", "fox", "jumps", "over", "lazy",
                         "dogs", "while", "reading", "ancient", "books", "slowly"};
  Rng rng(42);
  std::string text;
  while (text.size() < target_bytes) {
    text += words[rng.next_below(13)];
    if (rng.next_below(12) == 0)
      text += ". ";
    else
      text += " ";
  }
  return text;
}

void BM_TrainBpe(benchmark::State& state) {
  Corpus corpus;
  corpus.documents.push_back({"doc", synthetic_text(64 * 1024), std::nullopt});
  const int vocab_size = Vocab::kNumBaseTypes + static_cast<int>(state.range(0));
  for (auto _ : state) {
    Vocab vocab = train_bpe(corpus, vocab_size);
    benchmark::DoNotOptimize(vocab.vocab_size);
  }
}
BENCHMARK(BM_TrainBpe)->Arg(32)->Arg(64);

void BM_Encode(benchmark::State& state) {
  Corpus corpus;
  corpus.documents.push_back({"doc", synthetic_text(64 * 1024), std::nullopt});
  Vocab vocab = train_bpe(corpus, Vocab::kNumBaseTypes + 48);
  const std::string text = synthetic_text(static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    TokenSequence seq = encode(vocab, text);
    benchmark::DoNotOptimize(seq.ids.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(text.size()));
}
BENCHMARK(BM_Encode)->Arg(16 * 1024)->Arg(256 * 1024);

}  // namespace

BENCHMARK_MAIN();
