use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml")).unwrap_or_default();
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    match cbindgen::Builder::new().with_crate(&crate_dir).with_config(config).generate() {
        Ok(b) => {
            std::fs::create_dir_all(crate_dir.join("include")).expect("create include dir");
            b.write_to_file(crate_dir.join("include/segcritic.h"));
        }
        Err(e) => println!("cargo:warning=header not generated: {e}"),
    }
}
