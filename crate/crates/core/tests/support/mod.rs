pub mod fixture;
pub mod oracles;
pub mod stub_server;
