"""Regenerate the three-bug fixture corpus in this directory.

    python tests/fixtures/make_fixtures.py

Writes syzbot_export.jsonl, threads.mbox and commits.jsonl. The bugs mirror
three well-known syzbot cases: an hfsplus warning that took five versions,
a kcov warning fixed in NFC, and an L2TP locking fix.
"""

from __future__ import annotations

import email.utils
import hashlib
import json
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
DAY = 86400

SUBMITTER = "Dev One <dev.one@example.org>"
REVIEWERS = [
    "Maintainer A <maint.a@example.org>",
    "Reviewer B <rev.b@example.org>",
    "Reviewer C <rev.c@example.net>",
    "Reviewer D <rev.d@example.com>",
]
SYZBOT = "syzbot <syzbot+1c8ff72d0cd8a50dfeaa@syzkaller.appspotmail.com>"


def commit_hash(name: str) -> str:
    return hashlib.sha1(name.encode()).hexdigest()


def hunk(old_start: int, new_start: int, context: str, body: list[str]) -> list[str]:
    body = [l if l[:1] in ("+", "-") else " " + l for l in body]
    old_len = sum(1 for l in body if l[:1] in (" ", "-"))
    new_len = sum(1 for l in body if l[:1] in (" ", "+"))
    return [f"@@ -{old_start},{old_len} +{new_start},{new_len} @@ {context}".rstrip()] + body


def file_diff(path: str, hunks: list[list[str]]) -> str:
    lines = [f"diff --git a/{path} b/{path}", "index 1111111..2222222 100644", f"--- a/{path}", f"+++ b/{path}"]
    for h in hunks:
        lines += h
    return "\n".join(lines) + "\n"


def filler(prefix: str, n: int, start: int = 0) -> list[str]:
    return [f"{prefix}\tstep_{start + i}(node);" for i in range(n)]


# crash reports

HFS_REPORT = """\
------------[ cut here ]------------
WARNING: CPU: 0 PID: 9514 at fs/hfsplus/bnode.c:573 hfsplus_bnode_create+0x4a1/0x540 fs/hfsplus/bnode.c:573
Modules linked in:
CPU: 0 PID: 9514 Comm: syz-executor.3 Not tainted 5.6.0-rc2-syzkaller #0
RIP: 0010:hfsplus_bnode_create+0x4a1/0x540 fs/hfsplus/bnode.c:573
Call Trace:
 hfsplus_bmap_alloc+0x5a5/0x640 fs/hfsplus/btree.c:414
 hfs_btree_inc_height.isra.0+0x10b/0x870 fs/hfsplus/brec.c:475
 hfsplus_brec_insert+0x7ab/0xb20 fs/hfsplus/brec.c:75
 hfsplus_create_cat+0x1b1/0x6a0 fs/hfsplus/catalog.c:285
 hfsplus_fill_super+0x13bb/0x1900 fs/hfsplus/super.c:561
 mount_bdev+0x304/0x3c0 fs/super.c:1415
 legacy_get_tree+0x105/0x220 fs/fs_context.c:647
 vfs_get_tree+0x89/0x2f0 fs/super.c:1547
 do_mount+0x1398/0x1f00 fs/namespace.c:3034
 do_syscall_64+0xf6/0x7d0 arch/x86/entry/common.c:294
 entry_SYSCALL_64_after_hwframe+0x49/0xbe

"""

KCOV_REPORT = """\
------------[ cut here ]------------
WARNING: CPU: 1 PID: 3617 at kernel/kcov.c:847 kcov_remote_start+0x4a0/0x5c0 kernel/kcov.c:847
Modules linked in:
CPU: 1 PID: 3617 Comm: kworker/u4:5 Not tainted 6.2.0-syzkaller #0
Workqueue: nfc2_nci_rx_wq nci_rx_work
RIP: 0010:kcov_remote_start+0x4a0/0x5c0 kernel/kcov.c:847
Call Trace:
 <TASK>
 kcov_remote_start_common include/linux/kcov.h:48 [inline]
 process_one_work+0x9bf/0x1750 kernel/workqueue.c:2390
 worker_thread+0x669/0x1090 kernel/workqueue.c:2537
 kthread+0x2e8/0x3a0 kernel/kthread.c:376
 ret_from_fork+0x1f/0x30 arch/x86/entry/entry_64.S:308
 </TASK>
"""

L2TP_REPORT = """\
======================================================
WARNING: possible circular locking dependency detected
6.2.0-rc5-syzkaller #0 Not tainted
------------------------------------------------------
syz-executor.4/5112 is trying to acquire lock:
ffff88807a0e1130 (sk_lock-AF_INET){+.+.}-{0:0}, at: inet_autobind+0x1a/0x170 net/ipv4/af_inet.c:187

other info that might help us debug this:
Call Trace:
 <TASK>
 lock_acquire+0x1e3/0x630 kernel/locking/lockdep.c:5668
 lock_sock_nested+0x3a/0xf0 net/core/sock.c:3470
 lock_sock include/net/sock.h:1725 [inline]
 inet_autobind+0x1a/0x170 net/ipv4/af_inet.c:187
 inet_send_prepare+0x325/0x4e0 net/ipv4/af_inet.c:834
 inet_sendmsg+0x43/0x1e0 net/ipv4/af_inet.c:843
 sock_sendmsg_nosec net/socket.c:722 [inline]
 sock_sendmsg+0xde/0x190 net/socket.c:745
 pppol2tp_sendmsg+0x3f6/0x640 net/l2tp/l2tp_ppp.c:319
 </TASK>
"""

# final fixes

NFC_FIX = file_diff(
    "net/nfc/nci/core.c",
    [
        hunk(
            1518,
            1518,
            "static void nci_rx_work(struct work_struct *work)",
            [
                "\t\tif (!nci_plen(skb->data)) {",
                "\t\t\tkfree_skb(skb);",
                "+\t\t\tkcov_remote_stop();",
                "\t\t\tbreak;",
                "\t\t}",
            ],
        )
    ],
)

HFS_FIX = file_diff(
    "fs/hfsplus/bnode.c",
    [
        hunk(
            430,
            430,
            "static struct hfs_bnode *__hfs_bnode_create(struct hfs_btree *tree, u32 cnid)",
            [
                "\tnode = kzalloc(size, GFP_KERNEL);",
                "\tif (!node)",
                "\t\treturn NULL;",
                "+\tnode->page_offset = 0;",
                "+\tnode->tree = tree;",
                "\tnode->this = cnid;",
            ],
        )
    ],
)

L2TP_FIX = file_diff(
    "net/l2tp/l2tp_core.c",
    [
        hunk(
            1502,
            1502,
            "int l2tp_tunnel_register(struct l2tp_tunnel *tunnel, struct net *net,",
            [
                "\tsk = sock->sk;",
                "+\tlock_sock(sk);",
                "+\twrite_lock_bh(&sk->sk_callback_lock);",
                "\tsk->sk_user_data = tunnel;",
                "\tsk->sk_allocation = GFP_ATOMIC;",
                "+\twrite_unlock_bh(&sk->sk_callback_lock);",
                "+\trelease_sock(sk);",
                "+",
                "\t/* Publish the tunnel only after initialization */",
                "\tlist_add_rcu(&tunnel->list, &pn->l2tp_tunnel_list);",
            ],
        )
    ],
)

# v1 of the hfsplus fix: 76 changed lines across 3 files
HFS_V1 = (
    file_diff("fs/hfsplus/bnode.c", [hunk(420, 420, "static struct hfs_bnode *__hfs_bnode_create(struct hfs_btree *tree, u32 cnid)", ["\tint i;"] + filler("-", 10) + filler("+", 30) + ["\treturn node;"])])
    + file_diff("fs/hfsplus/btree.c", [hunk(400, 400, "struct hfs_bnode *hfs_bmap_alloc(struct hfs_btree *tree)", ["\tu32 nidx;"] + filler("-", 6, 100) + filler("+", 20, 100) + ["\treturn NULL;"])])
    + file_diff("fs/hfsplus/hfsplus_fs.h", [hunk(60, 60, "struct hfs_bnode {", ["\tu32 this;"] + filler("+", 10, 200) + ["\tu32 prev;"])])
)
HFS_V2 = file_diff("fs/hfsplus/bnode.c", [hunk(430, 430, "static struct hfs_bnode *__hfs_bnode_create(struct hfs_btree *tree, u32 cnid)", ["\t\treturn NULL;", "+\tnode->page_offset = 0;", "\tnode->this = cnid;"])])
L2TP_V1 = file_diff(
    "net/l2tp/l2tp_core.c",
    [hunk(1502, 1502, "int l2tp_tunnel_register(struct l2tp_tunnel *tunnel, struct net *net,", ["\tsk = sock->sk;", "+\tlock_sock(sk);", "\tsk->sk_user_data = tunnel;", "+\trelease_sock(sk);", "\tsk->sk_allocation = GFP_ATOMIC;"])],
)


class Mail:
    def __init__(self):
        self.messages: list[dict] = []

    def add(self, mid, subject, sender, body, t, parent=None):
        refs = []
        if parent is not None:
            p = next(m for m in self.messages if m["id"] == parent)
            refs = p["refs"] + [parent]
        self.messages.append({"id": mid, "subject": subject, "from": sender, "body": body, "t": t, "parent": parent, "refs": refs})
        return mid

    def write(self, path: Path):
        chunks = []
        for m in self.messages:
            headers = [
                f"From {email.utils.parseaddr(m['from'])[1]} Thu Jan  1 00:00:00 1970",
                f"From: {m['from']}",
                f"Subject: {m['subject']}",
                f"Date: {email.utils.formatdate(m['t'], usegmt=True)}",
                f"Message-ID: <{m['id']}>",
            ]
            if m["parent"]:
                headers.append(f"In-Reply-To: <{m['parent']}>")
                headers.append("References: " + " ".join(f"<{r}>" for r in m["refs"]))
            headers.append("Content-Type: text/plain; charset=utf-8")
            body = "\n".join((">" + l if l.startswith("From ") else l) for l in m["body"].splitlines())
            chunks.append("\n".join(headers) + "\n\n" + body + "\n")
        path.write_text("\n".join(chunks), encoding="utf-8")


def patch_body(msg: str, diff: str, changelog: str | None = None) -> str:
    body = msg.rstrip() + f"\n\nSigned-off-by: {SUBMITTER}\n---\n"
    if changelog:
        body += changelog.rstrip() + "\n\n"
    return body + diff + "-- \n2.39.0\n"


def hfs_threads(mail: Mail, t0: int) -> None:
    title = "hfsplus: fix uninit-value in hfsplus_bnode_create"
    diffs = [HFS_V1, HFS_V2, HFS_FIX, HFS_FIX, HFS_FIX]
    changelogs = [
        None,
        "Changes since v1:\n- drop the bmap rework, initialize the field instead",
        "Changes since v2:\n- also set node->tree\n- reword the commit message",
        "Changes since v3:\n- add Fixes tag",
        "Changes since v4:\n- rebase on current tree",
    ]
    # 10 + 8 + 6 + 4 + 4 = 32 review messages
    reviews = [
        [
            (0, None, "This is not the right fix. The root cause is that the node is used before it is initialized."),
            (1, 0, "Agreed, the bmap rework is unrelated to the warning. Please split it into a separate patch."),
            (2, None, "The patch is too large for a fix that has to go to stable."),
            (3, 1, "> Please split it\nYes, and the header change is unrelated too."),
            (0, 3, "Thanks"),
            (1, None, "Reviewed-by: Reviewer B <rev.b@example.org>"),
            (2, 2, "Why do you touch btree.c at all? The bmap code looks correct to me."),
            (0, 6, "The fix looks incomplete: other callers of __hfs_bnode_create have the same problem."),
            (3, None, "There is also a style problem: please follow the kernel coding style."),
            ("bot", None, "syzbot has tested the proposed patch but the reproducer is still triggering an issue."),
        ],
        [
            (0, None, "Better, but the commit message does not explain the crash path."),
            (1, 0, "Also please add a Fixes: tag."),
            (2, None, "Is page_offset the only field that is left uninitialized? I think tree is too, so this is incomplete."),
            (0, 2, "Right, node->tree has the same problem."),
            (3, None, "Acked-by: Reviewer D <rev.d@example.com>"),
            (1, 4, "Thanks!"),
            (2, 3, "Please reword the commit message when you resend."),
            ("bot", None, "syzbot has tested the proposed patch and the reproducer did not trigger any issue."),
        ],
        [
            (0, None, "Please add a Fixes tag pointing at the commit that introduced the allocation."),
            (1, 0, "Agreed."),
            (2, None, "Reviewed-by: Reviewer C <rev.c@example.net>"),
            (3, None, "Looks correct to me now."),
            (0, 3, "Thanks for checking."),
            ("bot", None, "syzbot has tested the proposed patch and the reproducer did not trigger any issue."),
        ],
        [
            (0, None, "This no longer applies to the current tree, please rebase."),
            (1, None, "Reviewed-by: Reviewer B <rev.b@example.org>"),
            (2, 0, "Thanks"),
            (3, None, "Tested-by: Reviewer D <rev.d@example.com>"),
        ],
        [
            (0, None, "Applied, thanks."),
            (1, None, "Reviewed-by: Reviewer B <rev.b@example.org>"),
            (2, 0, "Thanks!"),
            ("bot", None, "syzbot has tested the proposed patch and the reproducer did not trigger any issue."),
        ],
    ]
    spans = [0, 300, 700, 1000, 1160]
    for v in range(5):
        tv = t0 + spans[v] * DAY
        vtag = "PATCH" if v == 0 else f"PATCH v{v + 1}"
        subj = f"[{vtag}] {title}"
        root = mail.add(f"hfs-v{v + 1}@example.org", subj, SUBMITTER, patch_body(
            "The node is allocated without initializing page_offset and tree,\nwhich triggers the warning in hfsplus_bnode_create.",
            diffs[v], changelogs[v]), tv)
        ids = []
        for j, (who, parent, text) in enumerate(reviews[v]):
            sender = SYZBOT if who == "bot" else REVIEWERS[who]
            par = root if parent is None else ids[parent]
            ids.append(mail.add(f"hfs-v{v + 1}-r{j}@example.org", f"Re: {subj}", sender, text, tv + (j + 1) * 3600, par))


def l2tp_threads(mail: Mail, t0: int) -> None:
    title = "l2tp: hold the socket lock while initializing the tunnel socket"
    s1 = f"[PATCH net] {title}"
    r = mail.add("l2tp-v1@example.org", s1, SUBMITTER, patch_body(
        "The tunnel is published before its socket fields are set up.", L2TP_V1), t0)
    a = mail.add("l2tp-v1-r0@example.org", f"Re: {s1}", REVIEWERS[0],
                 "> +\tlock_sock(sk);\nThis still races with the teardown path: the tunnel is published\n"
                 "before sk_callback_lock is held, so the ordering is wrong.", t0 + 3600, r)
    mail.add("l2tp-v1-r1@example.org", f"Re: {s1}", SUBMITTER, "Ok, will fix the ordering in v2.", t0 + 7200, a)
    mail.add("l2tp-v1-r2@example.org", f"Re: {s1}", REVIEWERS[1], "Reviewed-by: Reviewer B <rev.b@example.org>", t0 + 9000, r)
    s2 = f"[PATCH net v2] {title}"
    r2 = mail.add("l2tp-v2@example.org", s2, SUBMITTER, patch_body(
        "Fix the order of initialization and publication of the tunnel socket.", L2TP_FIX,
        "Changes since v1:\n- take sk_callback_lock too, so the publication ordering is safe against concurrent teardown"),
        t0 + 2 * DAY)
    mail.add("l2tp-v2-r0@example.org", f"Re: {s2}", REVIEWERS[0], "Reviewed-by: Maintainer A <maint.a@example.org>", t0 + 3 * DAY, r2)


def nfc_threads(mail: Mail, t0: int) -> None:
    subj = "[PATCH] nfc: nci: add missing kcov_remote_stop() in nci_rx_work"
    r = mail.add("nfc-v1@example.org", subj, SUBMITTER, patch_body(
        "nci_rx_work leaves the loop without calling kcov_remote_stop().", NFC_FIX), t0)
    mail.add("nfc-v1-r0@example.org", f"Re: {subj}", REVIEWERS[2], "Reviewed-by: Reviewer C <rev.c@example.net>", t0 + 3600, r)
    mail.add("nfc-v1-r1@example.org", f"Re: {subj}", SYZBOT, "syzbot has tested the proposed patch and the reproducer did not trigger any issue.", t0 + 7200, r)


def noise_threads(mail: Mail, t0: int) -> None:
    subj = "[PATCH 5.10 012/100] nfc: nci: add missing kcov_remote_stop() in nci_rx_work"
    r = mail.add("stable-nfc@example.org", subj, "Stable Maint <stable.maint@example.org>", patch_body("Backport.", NFC_FIX), t0)
    mail.add("stable-nfc-r0@example.org", f"Re: {subj}", REVIEWERS[3], "This looks wrong for 5.10.", t0 + 600, r)


def build(out: Path = HERE) -> None:
    t_hfs = 1582000000  # 2020-02-18
    t_nfc = 1677000000
    t_l2tp = 1675000000
    mail = Mail()
    hfs_threads(mail, t_hfs + 10 * DAY)
    nfc_threads(mail, t_nfc + 2 * DAY)
    l2tp_threads(mail, t_l2tp + 3 * DAY)
    noise_threads(mail, t_nfc + 40 * DAY)
    mail.write(out / "threads.mbox")

    fixes = [
        ("hfs", "hfsplus: fix uninit-value in hfsplus_bnode_create\n\nInitialize page_offset and tree of a new bnode.", HFS_FIX, t_hfs + 1166 * DAY),
        ("nfc", "nfc: nci: add missing kcov_remote_stop() in nci_rx_work\n\nStop remote coverage collection before leaving the loop.", NFC_FIX, t_nfc + 5 * DAY),
        ("l2tp", "l2tp: hold the socket lock while initializing the tunnel socket\n\nFix the order of initialization and publication.", L2TP_FIX, t_l2tp + 6 * DAY),
    ]
    with open(out / "commits.jsonl", "w", encoding="utf-8") as fh:
        for name, msg, diff, t in fixes:
            fh.write(json.dumps({"hash": commit_hash(name), "message": msg, "diff": diff, "author_time": t - DAY,
                                 "commit_time": t, "tree": "mainline"}, sort_keys=True) + "\n")

    lore = "https://lore.kernel.org/all/{}/"
    bugs = [
        {"id": "1c8ff72d", "title": "WARNING in hfsplus_bnode_create", "status": "fixed",
         "crashes": [{"title": "WARNING in hfsplus_bnode_create", "report": HFS_REPORT, "repro-c": None,
                      "repro-syz": "mount$hfsplus(...)", "time": t_hfs}],
         "discussions": [lore.format("hfs-v1@example.org")], "fix-commits": [commit_hash("hfs")]},
        {"id": "0438378d", "title": "WARNING in kcov_remote_start", "status": "fixed",
         "crashes": [{"title": "WARNING in kcov_remote_start", "report": KCOV_REPORT,
                      "repro-c": "int main(void) { return 0; }", "repro-syz": "r0 = socket$nfc_llcp(...)", "time": t_nfc}],
         "discussions": [lore.format("nfc-v1@example.org")], "fix-commits": [commit_hash("nfc")]},
        {"id": "94cc2a66", "title": "possible deadlock in inet_autobind", "status": "fixed",
         "crashes": [{"title": "possible deadlock in inet_autobind", "report": L2TP_REPORT, "repro-c": None,
                      "repro-syz": "r0 = socket$l2tp(...)", "time": t_l2tp}],
         "discussions": [lore.format("l2tp-v1@example.org")], "fix-commits": [commit_hash("l2tp")]},
    ]
    with open(out / "syzbot_export.jsonl", "w", encoding="utf-8") as fh:
        for b in bugs:
            fh.write(json.dumps(b, sort_keys=True) + "\n")


if __name__ == "__main__":
    build(Path(sys.argv[1]) if len(sys.argv) > 1 else HERE)
