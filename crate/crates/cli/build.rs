//! Embeds a build identifier: the git revision when available, else the package version.

use std::process::Command;

fn main() {
    let rev = Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let id = match rev {
        Some(r) => format!("{}+{r}", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    };
    println!("cargo:rustc-env=QTAZRP_BUILD_ID={id}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
