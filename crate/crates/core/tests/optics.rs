mod common;

use cfcomm::optics::{apply_adjoint, apply_element, EomInstance, EomLabel, Element, ModeId, PhotonState, SidebandTag};
use common::{close, ALPHA};
use num_complex::Complex64;

fn m(s: &str) -> ModeId {
    ModeId::new(s)
}

fn bs(a: &str, b: &str, c: &str, d: &str) -> Element {
    Element::Beamsplitter { inputs: [m(a), m(b)], outputs: [m(c), m(d)], reflectivity: 0.5 }
}

fn source(modes: &[&str], on: &str) -> PhotonState {
    let ids: Vec<ModeId> = modes.iter().map(|s| m(s)).collect();
    PhotonState::single(ids.iter(), &m(on), Complex64::new(1.0, 0.0))
}

#[test]
fn balanced_splitter_symmetric_convention() {
    let s = apply_element(&source(&["a", "b"], "a"), &bs("a", "b", "c", "d")).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!((s.carrier(&m("c")) - Complex64::new(r, 0.0)).norm() < 1e-15);
    assert!((s.carrier(&m("d")) - Complex64::new(0.0, r)).norm() < 1e-15);
}

#[test]
fn two_splitters_make_a_swap() {
    // [[t, ir], [ir, t]]² at t = r = 1/√2 is [[0, i], [i, 0]].
    let s = apply_element(&source(&["a", "b"], "a"), &bs("a", "b", "c", "d")).unwrap();
    let s = apply_element(&s, &bs("c", "d", "e", "f")).unwrap();
    assert!(s.mode_prob(&m("e")) < 1e-30);
    assert!(close(s.mode_prob(&m("f")), 1.0, 1e-15));
    assert!((s.carrier(&m("f")) - Complex64::i()).norm() < 1e-15);
}

#[test]
fn modulator_adds_symmetric_sidebands() {
    let eom = Element::Eom {
        mode: m("a"),
        instance: EomInstance { label: EomLabel::E, pass: 1 },
        freq_ghz: 2.8,
        alpha: ALPHA,
    };
    let s = apply_element(&source(&["a"], "a"), &eom).unwrap();
    assert_eq!(s.carrier(&m("a")), Complex64::new(1.0, 0.0));
    for sign in [1, -1] {
        let a = s.amp(&m("a"), &SidebandTag::shifted(EomLabel::E, sign, 1));
        assert!(close(a.re, ALPHA, 1e-15) && a.im == 0.0);
    }
    assert!(close(s.norm(), 1.0 + 2.0 * ALPHA * ALPHA, 1e-15));
}

#[test]
fn same_label_passes_add_incoherently() {
    // carrier c through two passes of label B: each pass contributes α·c per
    // sign on its own tag, so tag_prob = 2 signs × 2 passes × α²|c|²/2 ... per
    // sign α²|c|² twice: total 2α²|c|² per sign pair member, 4α²|c|² both signs.
    let c = Complex64::new(0.6, 0.2);
    let ids = [m("a")];
    let mut s = PhotonState::single(ids.iter(), &m("a"), c);
    for pass in [1, 2] {
        s = apply_element(
            &s,
            &Element::Eom { mode: m("a"), instance: EomInstance { label: EomLabel::B, pass }, freq_ghz: 1.0, alpha: ALPHA },
        )
        .unwrap();
    }
    let per_sign = s.amp(&m("a"), &SidebandTag::shifted(EomLabel::B, 1, 1)).norm_sqr()
        + s.amp(&m("a"), &SidebandTag::shifted(EomLabel::B, 1, 2)).norm_sqr();
    // Incoherent: 2α²|c|² per sign, not the coherent 4α²|c|².
    assert!(close(per_sign, 2.0 * ALPHA * ALPHA * c.norm_sqr(), 1e-15));
    assert!(close(s.tag_prob(&m("a"), EomLabel::B), 2.0 * per_sign, 1e-15));
}

#[test]
fn mode_prob_of_an_eighth() {
    let ids = [m("D0")];
    let s = PhotonState::single(ids.iter(), &m("D0"), Complex64::new(0.125, 0.0));
    assert!(close(s.mode_prob(&m("D0")), 1.0 / 64.0, 1e-15));
}

#[test]
fn attenuator_and_block_keep_the_books() {
    let att = Element::Attenuator { mode: m("a"), transmission: 0.25, loss: m("l") };
    let s = apply_element(&source(&["a"], "a"), &att).unwrap();
    assert!(close(s.mode_prob(&m("a")), 1.0 / 16.0, 1e-15));
    assert!(close(s.mode_prob(&m("l")), 15.0 / 16.0, 1e-15));

    let blk = Element::Block { mode: m("a"), loss: m("x") };
    let s = apply_element(&source(&["a"], "a"), &blk).unwrap();
    assert_eq!(s.mode_prob(&m("a")), 0.0);
    assert!(close(s.norm(), 1.0, 1e-15));
    // the adjoint absorbs too
    let back = apply_adjoint(&PhotonState::single([m("a"), m("x")].iter(), &m("a"), Complex64::new(1.0, 0.0)), &blk).unwrap();
    assert_eq!(back.mode_prob(&m("a")), 0.0);
}

#[test]
fn unknown_mode_and_bad_alpha_are_errors() {
    let s = source(&["a"], "a");
    assert!(matches!(apply_element(&s, &bs("a", "z", "c", "d")), Err(cfcomm::Error::Topology(_))));
    let eom = Element::Eom { mode: m("a"), instance: EomInstance { label: EomLabel::A, pass: 1 }, freq_ghz: 2.1, alpha: 0.6 };
    assert!(matches!(apply_element(&s, &eom), Err(cfcomm::Error::Config(_))));
}
