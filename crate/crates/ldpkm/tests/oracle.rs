use ldpkm::data::gen_gaussian_mixture;
use ldpkm::theory::{abel_sides, grid_radii, TheoryOracle};
use ldpkm_core::grids::Grids;
use ldpkm_core::one_round::{one_round_kmeans, Alg1Params};
use ldpkm_core::NoiseMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn layer_identities_on_noiseless_runs() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mix = gen_gaussian_mixture(10, 2, 2, 0.5, 0.05, &mut rng);
        let mut p = Alg1Params::new(10, 2, 1.0, 1e-6, 0.3, 0.1);
        p.mode = NoiseMode::Noiseless;
        p.seed = seed;
        let out = one_round_kmeans(&mix.data, &p).unwrap();
        let images: Vec<Vec<f64>> = mix.data.iter().map(|x| out.map.apply(x)).collect();
        let grids = Grids::new(p.levels, p.alpha, out.reduced_dim);
        let oracle = TheoryOracle::new(&images);
        let s_opt = oracle.s_opt(2).unwrap();
        let radii = grid_radii(&grids);
        let layers = oracle.layers(&s_opt, &radii, &grids, &out.states);
        assert_eq!(layers.o.iter().sum::<usize>(), 10);
        assert!(layers.a.iter().sum::<usize>() <= 10);
        assert_eq!(layers.big_o[0], 10);
        let (lhs, rhs) = abel_sides(&layers.a, &radii);
        assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
    }
}
