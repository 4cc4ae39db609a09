import { ApiClient } from "./api.js";
import { AnnotationSession } from "./session.js";
import {
    canvasPoint,
    drawBlend,
    drawImageFit,
    drawMarker,
    imageFromBase64Png,
    imageFromPngBytes,
    maskBytesFromPng,
    maskToImageData,
    maskToOverlayData,
} from "./render.js";
import type { Point } from "./types.js";

const api = new ApiClient("");

interface PaneSet {
    rgb: CanvasRenderingContext2D;
    contrast: CanvasRenderingContext2D;
    matched: CanvasRenderingContext2D;
    mask: CanvasRenderingContext2D;
}

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (node === null) throw new Error(`missing element #${id}`);
    return node as T;
}

function ctxOf(id: string): CanvasRenderingContext2D {
    const ctx = el<HTMLCanvasElement>(id).getContext("2d");
    if (ctx === null) throw new Error(`no 2d context for #${id}`);
    return ctx;
}

class App {
    private session: AnnotationSession | null = null;
    private rgbImage: HTMLImageElement | null = null;
    private contrastImage: HTMLImageElement | null = null;
    private warpedImage: HTMLImageElement | null = null;
    private pendingRgbClick: Point | null = null;
    private paneStroke: Point[] = [];
    private panes!: PaneSet;
    private mode: "paint" | "erase" = "paint";

    async start(): Promise<void> {
        this.panes = {
            rgb: ctxOf("pane-rgb"),
            contrast: ctxOf("pane-contrast"),
            matched: ctxOf("pane-matched"),
            mask: ctxOf("pane-mask"),
        };
        await this.refreshSetList();
        this.wireControls();
    }

    private async refreshSetList(): Promise<void> {
        const select = el<HTMLSelectElement>("set-select");
        const records = await api.listSets();
        select.innerHTML = "";
        for (const record of records) {
            const option = document.createElement("option");
            option.value = record.id;
            option.textContent = `${record.id} (rev ${record.revision}, ${record.label})`;
            select.append(option);
        }
        if (records.length > 0) {
            await this.openSet(records[0].id);
        }
    }

    private async openSet(setId: string): Promise<void> {
        const [rgbBytes, contrastBytes, maskPng] = await Promise.all([
            api.fetchFile(setId, "rgb.png"),
            api.fetchFile(setId, "contrast.png"),
            api.fetchFile(setId, "mask.png"),
        ]);
        this.rgbImage = await imageFromPngBytes(rgbBytes);
        this.contrastImage = await imageFromPngBytes(contrastBytes);
        this.session = await AnnotationSession.load(api, setId, await maskBytesFromPng(maskPng));
        this.warpedImage =
            this.session.warpedPreviewB64 !== null
                ? await imageFromBase64Png(this.session.warpedPreviewB64)
                : null;
        this.pendingRgbClick = null;
        this.redraw();
    }

    private status(text: string): void {
        el<HTMLSpanElement>("status").textContent = text;
    }

    private redraw(): void {
        const session = this.session;
        if (session === null) return;
        if (this.rgbImage !== null) drawImageFit(this.panes.rgb, this.rgbImage);
        if (this.contrastImage !== null) drawImageFit(this.panes.contrast, this.contrastImage);
        session.pairs.forEach((pair, i) => {
            drawMarker(this.panes.rgb, pair.target, i, "#ffd34d");
            drawMarker(this.panes.contrast, pair.source, i, "#7dd3fc");
        });
        if (this.pendingRgbClick !== null) {
            drawMarker(this.panes.rgb, this.pendingRgbClick, session.pairs.length, "#f87171");
        }

        const blend = Number(el<HTMLInputElement>("blend").value) / 100;
        drawBlend(this.panes.matched, this.rgbImage, this.warpedImage, blend);
        this.panes.mask.putImageData(maskToImageData(session.mask), 0, 0);
        const overlayCanvas = document.createElement("canvas");
        overlayCanvas.width = overlayCanvas.height = 512;
        const overlayCtx = overlayCanvas.getContext("2d");
        if (overlayCtx !== null) {
            overlayCtx.putImageData(maskToOverlayData(session.mask), 0, 0);
            this.panes.matched.drawImage(overlayCanvas, 0, 0);
        }

        el<HTMLSpanElement>("residuals").textContent =
            session.residuals.length > 0
                ? session.residuals.map((r) => r.toFixed(2)).join(", ") + " px"
                : "—";
        el<HTMLSpanElement>("revision").textContent = String(session.revision);
        const flags = [
            session.dirty ? "unsaved changes" : "saved",
            session.pendingSave ? "save pending (offline)" : null,
            session.matchConfirmed ? "match confirmed" : "match not confirmed",
        ].filter((f): f is string => f !== null);
        el<HTMLSpanElement>("flags").textContent = flags.join(" · ");
    }

    private wireControls(): void {
        el<HTMLSelectElement>("set-select").addEventListener("change", (event) => {
            const id = (event.target as HTMLSelectElement).value;
            void this.openSet(id).catch((err) => this.status(String(err)));
        });

        el<HTMLCanvasElement>("pane-rgb").addEventListener("click", (event) => {
            this.pendingRgbClick = canvasPoint(el("pane-rgb"), event);
            this.status("now click the matching point in the contrast pane");
            this.redraw();
        });

        el<HTMLCanvasElement>("pane-contrast").addEventListener("click", (event) => {
            const session = this.session;
            if (session === null || this.pendingRgbClick === null) {
                this.status("click the RGB pane first");
                return;
            }
            const contrastClick = canvasPoint(el("pane-contrast"), event);
            const rgbClick = this.pendingRgbClick;
            this.pendingRgbClick = null;
            void session
                .placePointPair(rgbClick, contrastClick)
                .then(async () => {
                    this.warpedImage =
                        session.warpedPreviewB64 !== null
                            ? await imageFromBase64Png(session.warpedPreviewB64)
                            : null;
                    this.status(`${session.pairs.length} pair(s) placed`);
                    this.redraw();
                })
                .catch((err) => this.status(String(err)));
        });

        const matched = el<HTMLCanvasElement>("pane-matched");
        matched.addEventListener("mousedown", (event) => {
            this.paneStroke = [canvasPoint(matched, event)];
        });
        matched.addEventListener("mousemove", (event) => {
            if (this.paneStroke.length === 0) return;
            this.paneStroke.push(canvasPoint(matched, event));
        });
        const endStroke = () => {
            const session = this.session;
            if (session === null || this.paneStroke.length === 0) return;
            try {
                session.paint(this.paneStroke, this.mode);
            } catch (err) {
                this.status(String(err));
            }
            this.paneStroke = [];
            this.redraw();
        };
        matched.addEventListener("mouseup", endStroke);
        matched.addEventListener("mouseleave", endStroke);

        el<HTMLButtonElement>("confirm-match").addEventListener("click", () => {
            try {
                this.session?.confirmMatch();
                this.status("match confirmed; painting enabled");
            } catch (err) {
                this.status(String(err));
            }
            this.redraw();
        });

        for (const diameter of [4, 8, 16, 32]) {
            el<HTMLButtonElement>(`brush-${diameter}`).addEventListener("click", () => {
                if (this.session !== null) this.session.brushDiameter = diameter;
                this.status(`brush ${diameter} px`);
            });
        }
        el<HTMLInputElement>("mode-toggle").addEventListener("change", (event) => {
            this.mode = (event.target as HTMLInputElement).checked ? "erase" : "paint";
        });
        el<HTMLInputElement>("blend").addEventListener("input", () => this.redraw());
        // zoom rescales the panes via CSS; click mapping already normalizes
        // by the rendered rect, and panning falls to native scrollbars
        el<HTMLInputElement>("zoom").addEventListener("input", (event) => {
            const percent = Number((event.target as HTMLInputElement).value);
            for (const canvas of document.querySelectorAll<HTMLCanvasElement>("canvas")) {
                canvas.style.maxWidth = `${(512 * percent) / 100}px`;
            }
        });
        el<HTMLButtonElement>("undo").addEventListener("click", () => {
            this.session?.undo();
            this.redraw();
        });
        el<HTMLButtonElement>("redo").addEventListener("click", () => {
            this.session?.redo();
            this.redraw();
        });

        el<HTMLButtonElement>("save").addEventListener("click", () => {
            const session = this.session;
            if (session === null) return;
            void session
                .save()
                .then(async (outcome) => {
                    if (outcome.kind === "saved") {
                        this.status(`saved revision ${outcome.revision}`);
                    } else if (outcome.kind === "conflict") {
                        const overwrite = window.confirm(
                            `The set moved to revision ${outcome.currentRevision} elsewhere. ` +
                                "OK to overwrite, cancel to reload.",
                        );
                        if (overwrite) {
                            const retry = await session.save(outcome.currentRevision);
                            this.status(
                                retry.kind === "saved"
                                    ? `overwrote as revision ${retry.revision}`
                                    : `save failed again: ${retry.kind}`,
                            );
                        } else {
                            await this.openSet(session.setId);
                            this.status("reloaded the newer revision");
                        }
                    } else {
                        this.status(`offline: save queued (${outcome.error})`);
                    }
                    this.redraw();
                })
                .catch((err) => this.status(String(err)));
        });
    }
}

window.addEventListener("DOMContentLoaded", () => {
    const app = new App();
    void app.start().catch((err) => {
        const status = document.getElementById("status");
        if (status !== null) status.textContent = String(err);
    });
});
