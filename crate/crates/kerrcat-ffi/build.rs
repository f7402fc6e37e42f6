use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config = cbindgen::Config::from_file(dir.join("cbindgen.toml")).expect("cbindgen.toml");
    let header = cbindgen::Builder::new().with_crate(&dir).with_config(config).generate().expect("generate kerrcat.h");
    let path = dir.join("include/kerrcat.h");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    // only touch the file when it changes, so downstream C builds stay incremental
    header.write_to_file(path);
}
