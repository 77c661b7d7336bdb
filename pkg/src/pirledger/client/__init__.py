from .keystore import Keystore, KeystoreError
from .query import QueryIndexError, QueryReport, private_get
from .transport import PeerClient, PeerError

__all__ = ["Keystore", "KeystoreError", "PeerClient", "PeerError", "QueryIndexError", "QueryReport", "private_get"]
