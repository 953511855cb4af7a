use flowdub::metrics::{
    dtw, dtw_cost, eta, mcd_constant, mcd_dtw, mcd_dtw_sl, mcd_frame, mcd_report, mfcc, mfcc_from_log_mel, CepstralSeq,
};
use flowdub::numkernel::{Matrix, Rng};

fn seq(rows: &[Vec<f64>]) -> CepstralSeq {
    CepstralSeq::new(Matrix::from_rows(rows).unwrap()).unwrap()
}

fn random_seq(len: usize, k: usize, rng: &mut Rng) -> CepstralSeq {
    CepstralSeq::new(Matrix::from_fn(len, k, |_, _| rng.normal())).unwrap()
}

/// Minimum cost over every monotone path, by recursion.
fn brute_force(cost: &Matrix, i: usize, j: usize) -> f64 {
    let (m, n) = cost.shape();
    let here = cost.get(i, j);
    if (i, j) == (m - 1, n - 1) {
        return here;
    }
    let mut best = f64::INFINITY;
    if i + 1 < m {
        best = best.min(brute_force(cost, i + 1, j));
    }
    if j + 1 < n {
        best = best.min(brute_force(cost, i, j + 1));
    }
    if i + 1 < m && j + 1 < n {
        best = best.min(brute_force(cost, i + 1, j + 1));
    }
    here + best
}

fn check_path(res: &flowdub::metrics::DtwResult, m: usize, n: usize, cost: &Matrix) {
    assert_eq!(res.path.first(), Some(&(0, 0)));
    assert_eq!(res.path.last(), Some(&(m - 1, n - 1)));
    assert_eq!(res.r, res.path.len());
    for w in res.path.windows(2) {
        let step = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        assert!(matches!(step, (1, 0) | (0, 1) | (1, 1)), "bad step {step:?}");
    }
    let along: f64 = res.path.iter().map(|&(i, j)| cost.get(i, j)).sum();
    assert_eq!(along, res.gamma);
}

#[test]
fn dtw_matches_brute_force_on_small_shapes() {
    let mut rng = Rng::new(17);
    for m in 1..=4 {
        for n in 1..=4 {
            for _ in 0..25 {
                let cost = Matrix::from_fn(m, n, |_, _| rng.int_inclusive(0, 9) as f64);
                let res = dtw_cost(&cost).unwrap();
                assert_eq!(res.gamma, brute_force(&cost, 0, 0), "{m}x{n}");
                check_path(&res, m, n, &cost);
            }
        }
    }
}

#[test]
fn identical_inputs_walk_the_diagonal() {
    let mut rng = Rng::new(1);
    let c = random_seq(6, 4, &mut rng);
    let res = dtw(&c, &c).unwrap();
    assert_eq!(res.gamma, 0.0);
    assert_eq!(res.r, 6);
    assert!(res.path.iter().all(|&(i, j)| i == j));
    assert_eq!(mcd_dtw(&c, &c).unwrap(), 0.0);
}

#[test]
fn hand_two_by_two() {
    let a = seq(&[vec![0.0], vec![2.0]]);
    let b = seq(&[vec![0.5], vec![2.0]]);
    // costs/const: (0,0)=0.5 (0,1)=2 (1,0)=1.5 (1,1)=0; the diagonal wins
    let rep = mcd_report(&a, &b).unwrap();
    assert_eq!(rep.r, 2);
    assert!((rep.gamma - 0.5 * mcd_constant()).abs() < 1e-12);
    assert!((rep.mcd_dtw - 0.25 * mcd_constant()).abs() < 1e-12);
}

#[test]
fn single_frames_give_frame_distance() {
    let a = seq(&[vec![1.0, 2.0]]);
    let b = seq(&[vec![4.0, -2.0]]);
    let d = mcd_frame(&[1.0, 2.0], &[4.0, -2.0]).unwrap();
    assert_eq!(mcd_dtw(&a, &b).unwrap(), d);
    assert!((d - 5.0 * mcd_constant()).abs() < 1e-12);
}

#[test]
fn gamma_is_symmetric_and_sl_is_eta_scaled() {
    let mut rng = Rng::new(5);
    for _ in 0..50 {
        let m = rng.int_inclusive(1, 9) as usize;
        let n = rng.int_inclusive(1, 9) as usize;
        let a = random_seq(m, 3, &mut rng);
        let b = random_seq(n, 3, &mut rng);
        let ab = dtw(&a, &b).unwrap();
        let ba = dtw(&b, &a).unwrap();
        assert!((ab.gamma - ba.gamma).abs() <= 1e-12 * ab.gamma.max(1.0));
        let rep = mcd_report(&a, &b).unwrap();
        assert_eq!(rep.mcd_dtw_sl, eta(m, n).unwrap() * rep.mcd_dtw);
        assert_eq!(mcd_dtw_sl(&a, &b).unwrap(), rep.mcd_dtw_sl);
        if m == n {
            assert_eq!(rep.mcd_dtw_sl, rep.mcd_dtw);
        }
    }
}

#[test]
fn sl_orders_pairs_by_length_ratio_alone() {
    let a = |len: usize| seq(&vec![vec![1.0, 0.0]; len]);
    let b = |len: usize| seq(&vec![vec![0.0, 1.0]; len]);
    let d = mcd_frame(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let mut last_sl = 0.0;
    for n in [4, 6, 8, 12] {
        let rep = mcd_report(&a(4), &b(n)).unwrap();
        assert!((rep.mcd_dtw - d).abs() < 1e-12);
        assert!((rep.mcd_dtw_sl - d * n as f64 / 4.0).abs() < 1e-12);
        assert!(rep.mcd_dtw_sl > last_sl);
        last_sl = rep.mcd_dtw_sl;
    }

    let mut rng = Rng::new(9);
    let c = random_seq(5, 3, &mut rng);
    let mut doubled = Vec::new();
    for row in c.frames().iter_rows() {
        doubled.push(row.to_vec());
        doubled.push(row.to_vec());
    }
    let stretched = seq(&doubled);
    let rep = mcd_report(&c, &stretched).unwrap();
    assert_eq!(rep.gamma, 0.0);
    assert_eq!(rep.eta, 2.0);
}

#[test]
fn frame_distance_is_a_metric() {
    let mut rng = Rng::new(3);
    for _ in 0..200 {
        let a = rng.normal_vec(6);
        let b = rng.normal_vec(6);
        let c = rng.normal_vec(6);
        let ab = mcd_frame(&a, &b).unwrap();
        assert!(ab >= 0.0);
        assert_eq!(ab, mcd_frame(&b, &a).unwrap());
        assert_eq!(mcd_frame(&a, &a).unwrap(), 0.0);
        assert!(mcd_frame(&a, &c).unwrap() <= ab + mcd_frame(&b, &c).unwrap() + 1e-12);
    }
}

#[test]
fn mfcc_hand_dct() {
    let mel = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
    let c = mfcc(&mel, 2).unwrap();
    let (l2, l3, l4) = (2f64.ln(), 3f64.ln(), 4f64.ln());
    let (c1, c3) = (0.923_879_532_511_286_7, 0.382_683_432_365_089_8);
    let expect1 = 0.5f64.sqrt() * (l2 * c3 - l3 * c3 - l4 * c1);
    let expect2 = 0.5 * (2.0f64 / 3.0).ln();
    assert!((c.frames().get(0, 0) - expect1).abs() < 1e-12);
    assert!((c.frames().get(0, 1) - expect2).abs() < 1e-12);

    let log_mel = mel.map(f64::ln);
    assert!(
        mfcc_from_log_mel(&log_mel, 2)
            .unwrap()
            .frames()
            .max_abs_diff(c.frames())
            .unwrap()
            < 1e-15
    );
    assert_eq!(mfcc(&mel, 2).unwrap(), c);
}

#[test]
fn mismatched_orders_are_rejected() {
    let a = seq(&[vec![1.0, 2.0]]);
    let b = seq(&[vec![1.0]]);
    assert!(dtw(&a, &b).is_err());
    assert!(CepstralSeq::new(Matrix::zeros(0, 3)).is_err());
}
