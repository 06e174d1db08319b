use nalgebra::DMatrix;
fn main() {
    let cases: Vec<(&str, DMatrix<f64>)> = vec![
        ("rot2", DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])),
        ("mp_plant", DMatrix::from_row_slice(4, 4, &[
            0.0, 1.0, 0.0, 0.0,
            -1.0, 0.0, 0.0, 0.0,
            0.0, 2.0, -1.0, 0.0,
            -2.0, 0.0, 0.0, -1.0])),
    ];
    for (name, m) in cases {
        println!("case {name} ...");
        let start = std::time::Instant::now();
        let ev = m.complex_eigenvalues();
        println!("  {name}: {:?} in {:?}", ev.iter().collect::<Vec<_>>(), start.elapsed());
    }
}
