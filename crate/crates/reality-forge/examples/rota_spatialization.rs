//! From directed acyclic graphs to matrix algebras and back: template
//! support masks, algebraic closure, signal propagation, and the
//! spatialization that recovers a finite topological space from a matrix
//! subspace.
//!
//! Run with: cargo run --example rota_spatialization

use reality_forge::rota::{
    algebra_closure, is_closed_algebra, propagate, spatialize, template_matrix, Dag,
    MatrixSubspace,
};

fn show(mask: &[Vec<bool>]) {
    for row in mask {
        let cells: String = row.iter().map(|&b| if b { '*' } else { '0' }).collect();
        println!("    {cells}");
    }
}

fn main() {
    // A chain 0 -> 1 -> 2: the template only allows direct arrows, so it
    // is not closed under products until the composite 0 -> 2 is added.
    let chain = Dag::new(3, vec![(0, 1), (1, 2)]).unwrap();
    let template = template_matrix(&chain);
    println!("chain template (closed = {}):", is_closed_algebra(&template));
    show(&template.mask);
    let closed = algebra_closure(&template);
    println!("closure (closed = {}):", is_closed_algebra(&closed));
    show(&closed.mask);

    // Feed a signal through weights supported on the template.
    let weights = vec![
        vec![1.0, 2.0, 0.0],
        vec![0.0, 1.0, 3.0],
        vec![0.0, 0.0, 1.0],
    ];
    let out = propagate(&template, &weights, &[1.0, 1.0, 1.0], 2).unwrap();
    println!("signal [1, 1, 1] after two layers: {out:?}");

    // Spatialization: the span of the closed template's unit matrices
    // carries enough support information to rebuild the chain.
    let subspace = MatrixSubspace::new(3, closed.basis()).unwrap();
    let sp = spatialize(&subspace).unwrap();
    println!(
        "recovered dag edges: {:?} (cycles: {:?})",
        sp.dag.as_ref().map(Dag::edges),
        sp.cycles
    );
    println!("open sets of the recovered space:");
    for open in sp.topology.open_sets() {
        println!("  {open:?}");
    }

    // Collapsing example: a full matrix algebra remembers only one point.
    let full = MatrixSubspace::new(2, vec![
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ])
    .unwrap();
    let sp = spatialize(&full).unwrap();
    println!(
        "\nfull 2x2 algebra spatializes to {} point(s), cycle classes {:?}",
        sp.topology.open_sets().iter().map(Vec::len).max().unwrap_or(0),
        sp.cycles
    );
}
