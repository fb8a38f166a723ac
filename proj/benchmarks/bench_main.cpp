#include <benchmark/benchmark.h>

#include "sra/alignment.hpp"
#include "sra/autograd.hpp"
#include "sra/backbone.hpp"
#include "sra/dataset.hpp"
#include "sra/trainer.hpp"

namespace {

sra::ModelConfig bench_config(int depth, int dim) {
    auto c = sra::ModelConfig::tiny();
    c.depth = depth;
    c.hidden_dim = dim;
    return c;
}

void BM_Attention(benchmark::State& state) {
    const int B = 8, T = 64, D = static_cast<int>(state.range(0)), H = 4;
    sra::Rng rng(0);
    sra::Tensor qkv({B, T, 3 * D});
    for (auto& v : qkv.values()) v = rng.normal();
    for (auto _ : state) {
        sra::ag::Tape tape;
        auto x = tape.constant(qkv);
        benchmark::DoNotOptimize(sra::ag::attention(tape, x, B, T, H).value().data());
    }
}
BENCHMARK(BM_Attention)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    sra::DiffusionTransformer model(bench_config(6, 128), 0);
    sra::Rng rng(1);
    model.randomize(rng, 0.02);
    sra::Tensor x(model.config().image_shape(batch));
    for (auto& v : x.values()) v = rng.normal();
    std::vector<double> t(static_cast<std::size_t>(batch), 500.0);
    std::vector<int> ids(static_cast<std::size_t>(batch), 1);
    for (auto _ : state) {
        model.params().zero_grad();
        sra::ag::Tape tape;
        auto out = model.forward_with_taps(tape, x, t, ids, {}, true);
        auto loss = sra::ag::mse(tape, out.prediction, tape.constant(x));
        tape.backward(loss);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_ForwardBackward)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_EmaUpdate(benchmark::State& state) {
    sra::DiffusionTransformer student(bench_config(6, 128), 0);
    sra::TeacherState teacher(student);
    for (auto _ : state) teacher.update(student, 0.9999);
    state.SetItemsProcessed(state.iterations() * student.params().numel());
}
BENCHMARK(BM_EmaUpdate)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    sra::TrainConfig tc;
    tc.batch_size = static_cast<int>(state.range(0));
    sra::TrainState s(bench_config(6, 128), {}, tc, sra::SraConfig::defaults_for(sra::Family::continuous_flow, 6));
    const auto data = sra::generate_shapes(256, 4, 0);
    std::vector<std::int64_t> idx;
    for (int i = 0; i < tc.batch_size; ++i) idx.push_back(i);
    const auto x0 = data.gather(idx);
    const auto labels = data.gather_labels(idx);
    for (auto _ : state) {
        sra::Rng rng(0, sra::streams::train_step, static_cast<std::uint64_t>(s.step + 1));
        benchmark::DoNotOptimize(sra::train_step(s, x0, labels, rng).joint_loss);
    }
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
