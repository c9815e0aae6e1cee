use equivcheck::dafny;
use equivcheck::harness::generate_equiv_harness;
use equivcheck::scoring::equiv_targets;

fn main() {
    let dir = std::path::Path::new("crates/equivcheck/assets/fixtures");
    let out_dir = std::path::Path::new("crates/equivcheck/tests/golden/harness");
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".dfy"))
        .collect();
    names.sort();
    for name in names {
        let src = std::fs::read_to_string(dir.join(&name)).unwrap();
        let unit = dafny::parse_unit(&src).unwrap();
        let mut augmented = unit;
        for target in equiv_targets(&augmented) {
            match generate_equiv_harness(&augmented, &target) {
                Ok(u) => augmented = u,
                Err(e) => {
                    eprintln!("{name}: {target}: {e}");
                }
            }
        }
        std::fs::write(out_dir.join(&name), augmented.raw()).unwrap();
        println!("wrote {name}");
    }
}
