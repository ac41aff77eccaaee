//! Start a gateway on a loopback port and run a scenario against it.

use dori::gateway::{Archive, Gateway, GatewayServer};
use dori::scenario::Scenario;
use dori::sim::{run_scenario, GatewayTarget, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let server = GatewayServer::bind("127.0.0.1:0", Gateway::new(Archive::open(dir.path())?))?;
    println!("gateway listening on {}", server.local_addr());

    let s = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/upload_corruption.json"))?;
    let opts = SimOptions {
        gateway: GatewayTarget::Tcp(format!("tcp://{}", server.local_addr())),
        ..SimOptions::default()
    };
    let (_, report) = run_scenario(s, opts)?;
    for u in &report.uploads {
        println!("upload at {} s: {:?}", u.requested_at_s, u.outcome);
    }
    let gw = server.gateway();
    for f in gw.lock().expect("gateway lock").archive().files() {
        println!("on disk: {}", f.index_line());
    }
    Ok(())
}
