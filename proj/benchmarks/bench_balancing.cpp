#include <balancekit/balancing.hpp>
#include <balancekit/builders.hpp>
#include <balancekit/dataset.hpp>
#include <balancekit/manifold.hpp>
#include <balancekit/random.hpp>
#include <balancekit/regularizer.hpp>
#include <balancekit/training.hpp>

#include <benchmark/benchmark.h>

#include <vector>

using namespace balancekit;

namespace {

Network layered(std::size_t width, std::size_t depth, std::uint64_t seed) {
    LayeredSpec spec;
    spec.sizes.push_back(8);
    for (std::size_t d = 0; d < depth; ++d) spec.sizes.push_back(width);
    spec.sizes.push_back(4);
    spec.bias = true;
    Rng rng(seed);
    return make_layered_network(spec, rng);
}

void BM_BalanceNeuron(benchmark::State& state) {
    Network net = layered(static_cast<std::size_t>(state.range(0)), 3, 1);
    const auto hidden = net.hidden_units();
    const CostSpec cost = CostSpec::l2();
    std::size_t k = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(balance_neuron_in_place(net, hidden[k], cost));
        k = (k + 1) % hidden.size();
    }
}
BENCHMARK(BM_BalanceNeuron)->Arg(16)->Arg(64)->Arg(256);

void BM_OptimalLambdaMultiTerm(benchmark::State& state) {
    const Network net = layered(64, 3, 2);
    const UnitId unit = net.hidden_units().front();
    const CostSpec cost = CostSpec::parse("0.5*l1+l2+0.1*lp:3");
    for (auto _ : state) benchmark::DoNotOptimize(optimal_lambda(net, unit, cost));
}
BENCHMARK(BM_OptimalLambdaMultiTerm);

void BM_RunBalancing(benchmark::State& state) {
    const Network net = layered(static_cast<std::size_t>(state.range(0)), 3, 3);
    const CostSpec cost = CostSpec::l2();
    const StopCriteria stop{1e-12, 10'000'000};
    const Schedule schedule = state.range(1) == 0 ? Schedule::sequential({}, stop) : Schedule::partial_pass(stop);
    for (auto _ : state) benchmark::DoNotOptimize(run_balancing(net, schedule, cost));
}
BENCHMARK(BM_RunBalancing)->Args({16, 0})->Args({16, 1})->Args({64, 0})->Args({64, 1})
    ->Unit(benchmark::kMillisecond);

void BM_SolveConvex(benchmark::State& state) {
    const Network net = layered(static_cast<std::size_t>(state.range(0)), 3, 4);
    const CostSpec cost = CostSpec::l2();
    for (auto _ : state) benchmark::DoNotOptimize(solve_convex(net, cost));
}
BENCHMARK(BM_SolveConvex)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Gradients(benchmark::State& state) {
    const Dataset data = make_concentric_circles(200, 0.05, 5);
    LayeredSpec spec;
    spec.sizes = {2, 16, 16, 1};
    spec.output_activation = ActivationSpec::logistic();
    spec.bias = true;
    Rng rng(5);
    const Network net = make_layered_network(spec, rng);
    const std::vector<std::size_t> rows;
    for (auto _ : state)
        benchmark::DoNotOptimize(gradients(net, data, rows, LossKind::BinaryCrossEntropy, CostSpec::l2(0.01)));
}
BENCHMARK(BM_Gradients);

}  // namespace
BENCHMARK_MAIN();
