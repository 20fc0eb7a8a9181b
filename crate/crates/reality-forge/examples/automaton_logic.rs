//! State-identification experiments on Moore machines and the partition
//! logics they induce: which subsets of states are experimentally
//! decidable, and when two probes destroy each other's information.
//!
//! Run with: cargo run --example automaton_logic

use reality_forge::automaton::{
    finkelstein, hit_detector, experiment_partition, is_complementary, property_logic, LogicMode,
};

fn main() {
    let lamp = hit_detector();
    println!("hit detector: states {:?}, inputs {:?}", lamp.states(), lamp.inputs());

    // Probing cell k answers exactly "is the marble in cell k?".
    for input in lamp.inputs() {
        let partition = experiment_partition(&lamp, &[input.clone()]).unwrap();
        println!("  probe {input}: cells {:?}", partition.cells);
    }

    let all = property_logic(&lamp, 1, &LogicMode::AllCells);
    println!("all-cells logic: {} propositions", all.len());

    // Keeping only "miss" observations leaves the complements of single
    // cells: a lattice of the empty set, four coatoms, and the full set.
    let designated = property_logic(&lamp, 1, &LogicMode::Designated(vec!["miss".into()]));
    println!("designated-miss logic:");
    for &mask in &designated.elements {
        let cells: Vec<&str> = (0..designated.num_states)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| lamp.states()[i].as_str())
            .collect();
        println!("  {{{}}}", cells.join(", "));
    }

    // The square-walk variant: probing moves the marble along an edge of
    // the square, so distinct probes destroy each other's distinctions.
    let square = finkelstein();
    println!("\nsquare-walk machine: states {:?}", square.states());
    for i in 0..square.inputs().len() {
        for j in i + 1..square.inputs().len() {
            let (a, b) = (&square.inputs()[i], &square.inputs()[j]);
            let comp = is_complementary(&square, &[a.clone()], &[b.clone()]).unwrap();
            println!("  probes {a} and {b}: complementary = {comp}");
        }
    }
}
