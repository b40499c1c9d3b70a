import { boot } from "./ui.js";

window.addEventListener("DOMContentLoaded", () => {
  boot();
});
