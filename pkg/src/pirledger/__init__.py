"""Private reads over a simulated permissioned ledger using single-server PIR with BGV."""

__version__ = "0.1.0"
